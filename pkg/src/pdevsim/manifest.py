"""Orchestration manifest emission: distributed plan to pod specs.

Each container group becomes one single-container pod whose command starts
a simulator service for every atomic in the group; one extra pod runs the
root coordinator. The output is plain YAML so any orchestrator tooling (or
``kubectl apply``) can consume it; nothing here talks to a cluster.
"""

from __future__ import annotations

import shlex

import yaml

from .distributed import DistributedPlan


class ManifestError(Exception):
    """Grouping is inconsistent with the plan."""


DEFAULT_IMAGE = "pdevsim:latest"
DEFAULT_PLAN_PATH = "/etc/pdevsim/plan.xml"


def group_by_host(plan: DistributedPlan) -> dict[str, str]:
    """One container group per distinct simulator host."""
    hosts = []
    grouping = {}
    for name, endpoint in plan.endpoints.items():
        if endpoint.host not in hosts:
            hosts.append(endpoint.host)
        grouping[name] = f"group{hosts.index(endpoint.host)}"
    return grouping


def group_by_atomic(plan: DistributedPlan) -> dict[str, str]:
    """One container group per atomic (fully spread deployment)."""
    return {name: name for name in plan.endpoints}


def emit_orchestration_manifest(plan: DistributedPlan, grouping: dict[str, str], *,
                                image: str = DEFAULT_IMAGE,
                                plan_path: str = DEFAULT_PLAN_PATH) -> str:
    """Render pod specs for every container group plus the coordinator.

    ``grouping`` maps every atomic of the plan to a group name; two atomics
    in one group must not collide on a port.
    """
    plan.check()
    missing = sorted(set(plan.endpoints) - set(grouping))
    if missing:
        raise ManifestError(f"atomic {missing[0]!r} has no container group")
    unknown = sorted(set(grouping) - set(plan.endpoints))
    if unknown:
        raise ManifestError(f"grouping names unknown atomic {unknown[0]!r}")

    groups: dict[str, list[str]] = {}
    for name in plan.endpoints:  # plan order keeps output deterministic
        groups.setdefault(grouping[name], []).append(name)

    documents = []
    for group, members in groups.items():
        ports: list[int] = []
        for member in members:
            endpoint = plan.endpoints[member]
            for port in (endpoint.main_port, endpoint.aux_port):
                if port in ports:
                    raise ManifestError(
                        f"port {port} collides inside group {group!r}")
                ports.append(port)
        serves = " & ".join(
            f"pdevsim serve --plan {shlex.quote(plan_path)} --atomic {shlex.quote(m)}"
            for m in members)
        command = serves + " & wait" if len(members) > 1 else serves
        documents.append(_pod(f"sim-{group}", image, command, ports))
    documents.append(_pod(
        "coordinator", image,
        f"pdevsim coordinate --plan {shlex.quote(plan_path)}", []))
    return yaml.safe_dump_all(documents, sort_keys=False, explicit_start=True)


def _pod(name: str, image: str, command: str, ports: list[int]) -> dict:
    container = {
        "name": name,
        "image": image,
        "command": ["/bin/sh", "-c", command],
    }
    if ports:
        container["ports"] = [{"containerPort": port} for port in ports]
    return {
        "apiVersion": "v1",
        "kind": "Pod",
        "metadata": {"name": name, "labels": {"app": "pdevsim"}},
        "spec": {"restartPolicy": "Never", "containers": [container]},
    }

"""Benchmark harness: profiling, two-level allocation, backend runners and
speedup reporting.

This is the operator-facing machinery behind the CLI. Everything emits or
consumes plain CSV so results can be piped into any plotting tool; the
harness itself draws nothing.
"""

from __future__ import annotations

import csv
import io
import math
import socket
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

from .devstone import GENERATOR_NAME
from .distributed import DistributedPlan, Endpoint, Timeouts, run_coordinator
from .kernel import RunReport, SequentialCoordinator, SimulationError
from .model import ModelGraph
from .parallel import ParallelCoordinator, PoolPlan, PoolSpec
from .planfile import ParallelPlan, emit_distributed_plan_xml, parse_plan_xml


class BenchError(Exception):
    """Harness-level misuse: mismatched plans, missing baselines, bad input."""


# -- profiling -----------------------------------------------------------------


@dataclass(frozen=True)
class AtomicProfile:
    """CPU seconds one atomic spent inside its transition functions."""

    name: str
    cpu_seconds_ext: float
    cpu_seconds_int: float

    @property
    def total(self) -> float:
        return self.cpu_seconds_ext + self.cpu_seconds_int


PROFILE_HEADER = ("atomic", "cpu_seconds_ext", "cpu_seconds_int", "cpu_seconds_total")


def profile_model(graph: ModelGraph, runs: int = 1,
                  max_iterations: int | None = None) -> list[AtomicProfile]:
    """Sequential per-atomic CPU profile, averaged over ``runs`` and sorted
    slowest first (ties broken by name)."""
    if runs < 1:
        raise BenchError("profiling needs at least one run")
    sums: dict[str, list[float]] = {}
    for _ in range(runs):
        coordinator = SequentialCoordinator(graph, profile=True)
        coordinator.simulate(max_iterations)
        for name, cpu_ext, cpu_int in coordinator.atomic_profiles():
            entry = sums.setdefault(name, [0.0, 0.0])
            entry[0] += cpu_ext
            entry[1] += cpu_int
    profiles = [AtomicProfile(name, ext / runs, internal / runs)
                for name, (ext, internal) in sums.items()]
    profiles.sort(key=lambda p: (-p.total, p.name))
    return profiles


def profiles_to_csv(profiles: list[AtomicProfile]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(PROFILE_HEADER)
    for profile in profiles:
        writer.writerow([profile.name, repr(profile.cpu_seconds_ext),
                         repr(profile.cpu_seconds_int), repr(profile.total)])
    return out.getvalue()


def profiles_from_csv(text: str) -> list[AtomicProfile]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != PROFILE_HEADER:
        raise BenchError(f"bad profile CSV header: {header}")
    return [AtomicProfile(row[0], float(row[1]), float(row[2])) for row in reader if row]


# -- allocation ------------------------------------------------------------------


@dataclass(frozen=True)
class Allocation2Level:
    """Slow set / fast set split plus the resource counts per level."""

    l1: tuple[str, ...]
    l2: tuple[str, ...]
    l1_resources: int
    l2_resources: int


def allocate_two_level(profiles: list[AtomicProfile], graph: ModelGraph,
                       fraction: float = 0.25, n: int = 1,
                       m: int = 1) -> Allocation2Level:
    """Rank atomics by profiled cost and put the slowest fraction in L1.

    The trigger generator never counts toward the fraction and always lands
    in L2 (it is bookkeeping, not load). ``n``/``m`` are the resource
    counts of the two levels: workers for a pool run, container groups for
    a distributed one.
    """
    if n < 1 or m < 1:
        raise BenchError("resource counts must be >= 1")
    if not 0.0 <= fraction <= 1.0:
        raise BenchError("fraction must be in [0, 1]")
    flat_names = {spec.name: spec for _, spec in graph.walk_atomics()}
    profiled = {p.name for p in profiles}
    missing = sorted(set(flat_names) - profiled)
    if missing:
        raise BenchError(f"profile misses atomic {missing[0]!r}")
    ranked = sorted(profiles, key=lambda p: (-p.total, p.name))
    bench = [p.name for p in ranked
             if flat_names[p.name].model != GENERATOR_NAME]
    generators = [p.name for p in ranked
                  if flat_names[p.name].model == GENERATOR_NAME]
    # floor keeps 25% of 197 at 49, the split the two-level experiments use
    slow_count = int(fraction * len(bench) + 1e-9)
    l1 = tuple(bench[:slow_count])
    l2 = tuple(bench[slow_count:] + generators)
    return Allocation2Level(l1, l2, n, m)


def two_level_pool_plan(alloc: Allocation2Level) -> PoolPlan:
    """Two pools, L1 before L2, members in rank order."""
    assignment = {name: "L1" for name in alloc.l1}
    assignment.update({name: "L2" for name in alloc.l2})
    return PoolPlan((PoolSpec("L1", alloc.l1_resources),
                     PoolSpec("L2", alloc.l2_resources)), assignment)


def balanced_buckets(profiles: list[AtomicProfile], m: int) -> list[list[str]]:
    """Round-robin the ranked atomics over ``m`` resources.

    Heaviest-first round-robin keeps per-resource load sums within one
    heaviest atomic of each other.
    """
    if m < 1:
        raise BenchError("resource count must be >= 1")
    ranked = sorted(profiles, key=lambda p: (-p.total, p.name))
    buckets: list[list[str]] = [[] for _ in range(m)]
    for index, profile in enumerate(ranked):
        buckets[index % m].append(profile.name)
    return buckets


def balanced_pool_plan(profiles: list[AtomicProfile], m: int,
                       name: str = "main") -> PoolPlan:
    """One pool of ``m`` workers; tasks submitted heaviest first so the
    heavy atomics spread over distinct workers."""
    ranked = sorted(profiles, key=lambda p: (-p.total, p.name))
    return PoolPlan((PoolSpec(name, m),), {p.name: name for p in ranked})


def two_level_groups(alloc: Allocation2Level) -> dict[str, str]:
    """Container grouping for a distributed two-level deployment: ranked
    round-robin inside each level."""
    grouping: dict[str, str] = {}
    for index, atomic in enumerate(alloc.l1):
        grouping[atomic] = f"L1-{index % alloc.l1_resources}"
    for index, atomic in enumerate(alloc.l2):
        grouping[atomic] = f"L2-{index % alloc.l2_resources}"
    return grouping


# -- backend runners ---------------------------------------------------------------


def run_sequential(graph: ModelGraph, *, iterations: int | None = None,
                   trace: bool = False) -> RunReport:
    return SequentialCoordinator(graph, trace=trace).simulate(iterations)


def run_parallel(graph: ModelGraph, pool_plan: PoolPlan, *,
                 iterations: int | None = None, trace: bool = False) -> RunReport:
    with ParallelCoordinator(graph, pool_plan, trace=trace) as coordinator:
        return coordinator.simulate(iterations)


def free_port_block(count: int, host: str = "127.0.0.1") -> list[int]:
    """Distinct currently-free TCP ports, reserved simultaneously so they
    cannot collide with each other."""
    sockets = []
    try:
        for _ in range(count):
            sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            sock.bind((host, 0))
            sockets.append(sock)
        return [sock.getsockname()[1] for sock in sockets]
    finally:
        for sock in sockets:
            sock.close()


def local_plan(graph: ModelGraph, host: str = "127.0.0.1") -> DistributedPlan:
    """Distributed plan over loopback with freshly probed free ports."""
    from .planfile import _flat  # deterministic flatten with validation
    flat = _flat(graph)
    names = [spec.name for _, spec in flat.walk_atomics()]
    ports = free_port_block(2 * len(names) + 1, host)
    endpoints = {name: Endpoint(host, ports[2 * i], ports[2 * i + 1])
                 for i, name in enumerate(names)}
    return DistributedPlan(flat, endpoints, Endpoint(host, ports[-1]))


def _wait_listening(endpoint: Endpoint, deadline: float,
                    process: subprocess.Popen) -> None:
    # Probe the aux port: it accepts any number of connections.
    while True:
        if process.poll() is not None:
            raise SimulationError(
                f"simulator process for {endpoint} exited with "
                f"code {process.returncode} before listening")
        try:
            probe = socket.create_connection(endpoint.aux_addr(), timeout=0.2)
            probe.close()
            return
        except OSError:
            if time.monotonic() > deadline:
                raise SimulationError(f"simulator at {endpoint} never came up")
            time.sleep(0.05)


def run_distributed_local(plan_or_graph, *, iterations: int | None = None,
                          trace: bool = False, startup_timeout: float = 60.0,
                          timeouts: Timeouts | None = None) -> RunReport:
    """Spawn one service process per atomic on loopback, run the
    coordinator against them, and tear everything down."""
    if isinstance(plan_or_graph, DistributedPlan):
        plan = plan_or_graph
    else:
        plan = local_plan(plan_or_graph)
    plan.check()
    processes: list[subprocess.Popen] = []
    with tempfile.TemporaryDirectory(prefix="pdevsim-") as tmp:
        plan_path = Path(tmp) / "plan.xml"
        plan_path.write_text(emit_distributed_plan_xml(plan), encoding="utf-8")
        try:
            for name in plan.endpoints:
                processes.append(subprocess.Popen(
                    [sys.executable, "-m", "pdevsim", "serve",
                     "--plan", str(plan_path), "--atomic", name],
                    stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL))
            deadline = time.monotonic() + startup_timeout
            for name, endpoint in plan.endpoints.items():
                _wait_listening(endpoint, deadline,
                                processes[list(plan.endpoints).index(name)])
            report = run_coordinator(plan, iterations, trace=trace,
                                     timeouts=timeouts)
            for process in processes:
                try:
                    process.wait(timeout=10.0)
                except subprocess.TimeoutExpired:
                    process.kill()
            report.backend = "distributed-local"
            return report
        finally:
            for process in processes:
                if process.poll() is None:
                    process.kill()


BACKENDS = ("sequential", "parallel", "distributed-local")


def run_plan(parsed, backend: str, *, iterations: int | None = None,
             trace: bool = False) -> RunReport:
    """Run a parsed plan document under the named backend.

    Sequential accepts either addressing mode (it only needs the model);
    parallel needs pool addressing, distributed-local endpoint addressing.
    """
    if backend == "sequential":
        graph = parsed.graph if isinstance(parsed, (ParallelPlan, DistributedPlan)) else parsed
        return run_sequential(graph, iterations=iterations, trace=trace)
    if backend == "parallel":
        if not isinstance(parsed, ParallelPlan):
            raise BenchError("parallel backend needs a pool-addressed plan")
        return run_parallel(parsed.graph, parsed.pool_plan,
                            iterations=iterations, trace=trace)
    if backend == "distributed-local":
        if not isinstance(parsed, DistributedPlan):
            raise BenchError("distributed-local backend needs an "
                             "endpoint-addressed plan")
        return run_distributed_local(parsed, iterations=iterations, trace=trace)
    raise BenchError(f"unknown backend {backend!r} (choose from {BACKENDS})")


# -- result rows and speedups ----------------------------------------------------------


def append_report_row(path: str | Path, report: RunReport) -> None:
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    with path.open("a", encoding="utf-8") as handle:
        if fresh:
            handle.write(RunReport.CSV_HEADER + "\n")
        handle.write(report.csv_row() + "\n")


def read_report_rows(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != RunReport.CSV_HEADER.split(","):
            raise BenchError(f"bad results header in {path}: {reader.fieldnames}")
        return [dict(row) for row in reader]


@dataclass(frozen=True)
class SpeedupRow:
    model: str
    group: str  # sequential / parallel-1pool / parallel-2pool / distributed...
    label: str  # "i x j" style worker/pool shape
    wall_seconds: float
    speedup: float


SPEEDUP_HEADER = ("model", "group", "label", "wall_seconds", "speedup")


def speedup_rows(rows: list[dict[str, str]]) -> list[SpeedupRow]:
    """Fold result rows into speedups against the sequential baseline.

    Exactly one sequential row per model is required; it becomes the
    reference time for every other row of that model.
    """
    baselines: dict[str, float] = {}
    for row in rows:
        if row["backend"] == "sequential":
            if row["model"] in baselines:
                raise BenchError(f"multiple sequential baselines for {row['model']!r}")
            baselines[row["model"]] = float(row["wall_seconds"])
    result = []
    for row in rows:
        model = row["model"]
        if model not in baselines:
            raise BenchError(f"no sequential baseline for model {model!r}")
        wall = float(row["wall_seconds"])
        if wall <= 0 or math.isnan(wall):
            raise BenchError(f"bad wall time {row['wall_seconds']!r}")
        backend = row["backend"]
        if backend == "parallel":
            pools = row["workers/pools"].count("x") + 1
            group = f"parallel-{pools}pool"
        else:
            group = backend
        result.append(SpeedupRow(model, group, row["workers/pools"], wall,
                                 baselines[model] / wall))
    return result


def speedups_to_csv(rows: list[SpeedupRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(SPEEDUP_HEADER)
    for row in rows:
        writer.writerow([row.model, row.group, row.label,
                         repr(row.wall_seconds), repr(row.speedup)])
    return out.getvalue()


def plot_data_csv(rows: list[SpeedupRow]) -> str:
    """Long-format (group, label, speedup) table per model, ready for any
    bar-chart tool."""
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(("model", "group", "label", "speedup"))
    for row in rows:
        if row.group == "sequential":
            continue
        writer.writerow([row.model, row.group, row.label, repr(row.speedup)])
    return out.getvalue()

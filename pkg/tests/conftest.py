"""Shared test helpers: toy behaviors and in-process distributed services."""

from __future__ import annotations

import contextlib

import pytest

from pdevsim import (AtomicModel, ModelGraph, atomic_spec, register_behavior,
                     serve_simulator)
from pdevsim.behaviors import _REGISTRY


def _register(name, cls):
    if name not in _REGISTRY:
        register_behavior(name)(cls)
    return _REGISTRY[name]


class EmitOnce(AtomicModel):
    """Emits its own name once at virtual time delay_int, then passivates."""

    INPUT_PORTS = ()
    OUTPUT_PORTS = ("out",)

    def initialize(self):
        self.hold_in("armed", self.spec.delay_int)

    def output(self):
        self.emit("out", self.name)

    def delta_int(self):
        self.passivate()

    def delta_ext(self, e):
        pass


class Collector(AtomicModel):
    """Sinks everything; arrival order is visible through its trace."""

    INPUT_PORTS = ("in",)
    OUTPUT_PORTS = ()

    def initialize(self):
        self.received = []
        self.passivate()

    def delta_int(self):
        self.passivate()

    def delta_ext(self, e):
        self.received.extend(self.bag("in"))


class BusyExt(AtomicModel):
    """Burns delay_ext CPU seconds when (and only when) an event arrives."""

    INPUT_PORTS = ("in",)
    OUTPUT_PORTS = ()

    def initialize(self):
        self.passivate()

    def delta_int(self):
        self.passivate()

    def delta_ext(self, e):
        from pdevsim import busy_cpu
        busy_cpu(self.spec.delay_ext)


_register("emit_once", EmitOnce)
_register("collector", Collector)
_register("busy_ext", BusyExt)


def toy_spec(name, model, **kw):
    return atomic_spec(name, model, **kw)


def fan_out_model(senders=1, receivers=2, emit_at=0.0) -> ModelGraph:
    """senders x receivers complete bipartite toy model."""
    graph = ModelGraph("toy")
    sender_names = [f"s{i}" for i in range(senders)]
    receiver_names = [f"r{i}" for i in range(receivers)]
    for name in sender_names:
        graph.add_component(atomic_spec(name, "emit_once", delay_int=emit_at))
    for name in receiver_names:
        graph.add_component(atomic_spec(name, "collector"))
    for src in sender_names:
        for dst in receiver_names:
            graph.connect(src, "out", dst, "in")
    return graph


@contextlib.contextmanager
def thread_services(plan, names=None):
    """Run simulator services for a plan inside this process."""
    services = []
    try:
        for name in (names or plan.endpoints):
            services.append(serve_simulator(plan, name))
        yield services
    finally:
        for service in services:
            service.stop()


@pytest.fixture
def gpt_graph():
    from pdevsim import build_gpt
    return build_gpt()

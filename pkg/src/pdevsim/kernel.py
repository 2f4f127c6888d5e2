"""Abstract-simulator protocol and the sequential root coordinator.

The sequential coordinator is the reference backend: parallel and
distributed execution must reproduce its event traces and counter totals
exactly. The cycle is the classic one: advance the clock to the minimum
next-event time, run the output functions of the imminent simulators,
propagate values along the couplings, then run exactly one transition per
affected simulator.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

from .behaviors import AtomicModel, Counters, create_behavior
from .model import (EIC, IC, INPUT, AtomicSpec, ModelGraph, _leaf_names,
                    flatten, validate)

INFINITY = math.inf


class SimulationError(Exception):
    """A run aborted: invalid setup or a failing user transition."""


@dataclass
class SimulationClock:
    """Virtual time plus the count of completed DEVS cycles."""

    t: float = 0.0
    iteration: int = 0


@dataclass(frozen=True)
class TraceEntry:
    """One transition of one atomic: what it consumed and what it emitted.

    ``inputs`` holds (port, values) pairs for non-empty input bags at
    transition time; ``outputs`` the values deposited by the output function
    in the same cycle (empty unless the atomic was imminent).
    """

    time: float
    kind: str  # "int" | "ext" | "con"
    inputs: tuple[tuple[str, tuple], ...]
    outputs: tuple[tuple[str, tuple], ...]


def _bags_snapshot(bags: dict[str, list], order: tuple[str, ...]) -> tuple:
    return tuple((port, tuple(bags[port])) for port in order if bags[port])


def trace_text(traces: dict[str, list[TraceEntry]]) -> str:
    """Canonical one-line-per-transition serialization, atomics sorted by
    name. Byte-equal outputs mean equal traces; used for cross-backend
    comparison."""
    lines = []
    for name in sorted(traces):
        for entry in traces[name]:
            payload = json.dumps(
                [entry.time, entry.kind,
                 [[p, list(v)] for p, v in entry.inputs],
                 [[p, list(v)] for p, v in entry.outputs]],
                separators=(",", ":"), allow_nan=False)
            lines.append(f"{name}|{payload}")
    return "\n".join(lines) + ("\n" if lines else "")


class Simulator:
    """Drives one atomic model: tL/tN bookkeeping around the behavior."""

    __slots__ = ("model", "tL", "tN", "trace", "cpu_int", "cpu_ext", "_profile")

    def __init__(self, model: AtomicModel, *, trace: bool = False,
                 profile: bool = False) -> None:
        self.model = model
        self.tL = 0.0
        self.tN = INFINITY
        self.trace: list[TraceEntry] | None = [] if trace else None
        self.cpu_int = 0.0
        self.cpu_ext = 0.0
        self._profile = profile

    @property
    def name(self) -> str:
        return self.model.name

    def initialize(self) -> None:
        try:
            self.model.initialize()
        except Exception as exc:
            raise SimulationError(f"initialize failed in atomic {self.name!r}: {exc}") from exc
        self.tL = 0.0
        self.tN = self.tL + self.model.time_advance()

    def run_lambda(self, t: float) -> None:
        """Run the output function iff this simulator is imminent at ``t``."""
        if math.isinf(t) or self.tN != t:
            return
        try:
            self.model.output()
        except Exception as exc:
            raise SimulationError(f"output failed in atomic {self.name!r}: {exc}") from exc

    def run_delta(self, t: float) -> str | None:
        """Apply at most one transition for the cycle at time ``t``.

        Internal when imminent with an empty bag, external when input
        arrived before the schedule, confluent on collision; a no-op
        otherwise. Returns the kind executed, or None. On a transition the
        bookkeeping is tL = t, tN = t + ta, and all bags are cleared.
        """
        if self.tN < t:
            raise SimulationError(
                f"clock overran atomic {self.name!r}: tN={self.tN} < t={t}")
        imminent = self.tN == t
        has_input = not self.model.input_empty()
        if not imminent and not has_input:
            return None
        if imminent and not has_input:
            kind = "int"
        elif not imminent:
            kind = "ext"
        else:
            kind = "con"
        entry_inputs = entry_outputs = ()
        if self.trace is not None:
            entry_inputs = _bags_snapshot(self.model.input_bags, self.model.spec.input_ports)
            entry_outputs = _bags_snapshot(self.model.output_bags, self.model.spec.output_ports)
        started = time.thread_time() if self._profile else 0.0
        try:
            if kind == "int":
                self.model.delta_int()
            elif kind == "ext":
                self.model.delta_ext(t - self.tL)
            else:
                self.model.delta_con()
        except Exception as exc:
            raise SimulationError(f"transition failed in atomic {self.name!r}: {exc}") from exc
        if self._profile:
            elapsed = time.thread_time() - started
            if kind == "int":
                self.cpu_int += elapsed
            elif kind == "ext":
                self.cpu_ext += elapsed
            else:  # confluent time split evenly between the two columns
                self.cpu_int += elapsed / 2.0
                self.cpu_ext += elapsed / 2.0
        if self.trace is not None:
            self.trace.append(TraceEntry(t, kind, entry_inputs, entry_outputs))
        self.tL = t
        self.tN = t + self.model.time_advance()
        self.model.clear_bags()
        return kind


@dataclass
class RunReport:
    """Outcome of one run: counters, cycle count, wall time, optional traces."""

    model: str
    backend: str
    workers_pools: str
    cycles: int
    wall_seconds: float
    num_delt_ints: int
    num_delt_exts: int
    num_of_events: int
    traces: dict[str, list[TraceEntry]] | None = None
    diagnostics: dict = field(default_factory=dict)

    CSV_HEADER = ("model,backend,workers/pools,cycles,wall_seconds,"
                  "num_delt_ints,num_delt_exts,num_events")

    def csv_row(self) -> str:
        return (f"{self.model},{self.backend},{self.workers_pools},{self.cycles},"
                f"{self.wall_seconds!r},{self.num_delt_ints},{self.num_delt_exts},"
                f"{self.num_of_events}")

    def counter_triple(self) -> tuple[int, int, int]:
        return self.num_delt_ints, self.num_delt_exts, self.num_of_events

    def trace_text(self) -> str:
        if self.traces is None:
            raise SimulationError("run was executed without tracing")
        return trace_text(self.traces)


# Key of a boundary-port bag in hierarchical execution.
_BoundaryKey = tuple[tuple[str, ...], str, str]


class SequentialCoordinator:
    """Single-threaded root coordinator over a (normally flattened) graph.

    By default the graph is flattened first so that every backend executes
    the identical single-level structure. ``flatten=False`` keeps the
    hierarchy and propagates values hop by hop through coupled boundary
    ports, which exists to demonstrate closure under coupling.
    """

    backend_name = "sequential"

    def __init__(self, graph: ModelGraph, *, flatten_graph: bool = True,
                 trace: bool = False, profile: bool = False,
                 counters: Counters | None = None) -> None:
        errors = [v for v in validate(graph) if v.severity == "error"]
        if errors:
            raise SimulationError(f"invalid graph {graph.name!r}: {errors[0].message}")
        graph.freeze()
        self.graph = graph
        self.exec_graph = flatten(graph) if flatten_graph else graph
        self.exec_graph.freeze()
        self.counters = counters if counters is not None else Counters()
        self.clock = SimulationClock()
        self.trace_enabled = trace
        self.simulators: dict[str, Simulator] = {}
        self._sim_list: list[Simulator] = []
        self._rename = _leaf_names(self.exec_graph)
        for path, spec in self.exec_graph.walk_atomics():
            run_name = self._rename[path]
            if run_name != spec.name:
                spec = AtomicSpec(run_name, spec.model, spec.delay_int, spec.delay_ext,
                                  spec.input_ports, spec.output_ports)
            sim = Simulator(create_behavior(spec, self.counters),
                            trace=trace, profile=profile)
            self.simulators[run_name] = sim
            self._sim_list.append(sim)
        self.dropped_events = 0
        self._build_routes()
        self._init_done = False
        self.initialize()

    # -- protocol operations ---------------------------------------------------

    def initialize(self) -> None:
        """Run every atomic's init, reset bookkeeping, seat the clock."""
        for sim in self._sim_list:
            sim.initialize()
        self.clock = SimulationClock(t=self.time_advance(), iteration=0)
        self.dropped_events = 0
        self._init_done = True

    def time_advance(self) -> float:
        """Minimum next-event time over the child simulators (read-only)."""
        tn = INFINITY
        for sim in self._sim_list:
            if sim.tN < tn:
                tn = sim.tN
        return tn

    def run_lambda(self) -> None:
        """Output functions of imminent simulators, then value propagation."""
        t = self.clock.t
        for sim in self._sim_list:
            sim.run_lambda(t)
        self._propagate()

    def run_deltfcn(self) -> None:
        """One transition per affected simulator, then bag hygiene."""
        t = self.clock.t
        for sim in self._sim_list:
            sim.run_delta(t)
        self._clear_boundaries()

    def simulate(self, max_iterations: int | None = None) -> RunReport:
        """Drive cycles until passivity or the iteration cap."""
        if not self._init_done:
            self.initialize()
        started = time.perf_counter()
        cycles = 0
        while max_iterations is None or cycles < max_iterations:
            tn = self.time_advance()
            self.clock.t = tn
            if math.isinf(tn):
                break
            self.run_lambda()
            self.run_deltfcn()
            self.clock.iteration += 1
            cycles += 1
        wall = time.perf_counter() - started
        return self._report(cycles, wall)

    # -- internals ----------------------------------------------------------------

    def _report(self, cycles: int, wall: float) -> RunReport:
        ints, exts, events = self.counters.triple()
        traces = None
        if self.trace_enabled:
            traces = {sim.name: list(sim.trace) for sim in self._sim_list}
        return RunReport(
            model=self.graph.name, backend=self.backend_name,
            workers_pools=self.workers_pools_label(), cycles=cycles,
            wall_seconds=wall, num_delt_ints=ints, num_delt_exts=exts,
            num_of_events=events, traces=traces,
            diagnostics={"dropped_events": self.dropped_events})

    def workers_pools_label(self) -> str:
        return "1"

    def atomic_profiles(self) -> list[tuple[str, float, float]]:
        """(name, cpu_ext, cpu_int) per atomic; meaningful when profiling."""
        return [(sim.name, sim.cpu_ext, sim.cpu_int) for sim in self._sim_list]

    # Propagation. In flat mode every coupling copies directly from an
    # atomic output bag to an atomic input bag (boundary couplings of an
    # open flat graph have no runtime peer in a closed run and are
    # skipped). In hierarchical mode values hop through coupled boundary
    # bags: outputs climb EOCs child-first, cross one IC, then descend EICs
    # top-down, which reproduces the classic coordinator hierarchy without
    # materializing it.

    def _build_routes(self) -> None:
        self._routes: list | None = None
        self._boundary: dict[_BoundaryKey, list] = {}
        self._boundary_consumed: set[_BoundaryKey] = set()
        self._uncoupled: dict[str, tuple[str, ...]] = {}
        if self.exec_graph.is_flat():
            routes = []
            out_degree: dict[tuple[str, str], int] = {}
            for coupling in self.exec_graph.couplings:
                if coupling.kind != IC:
                    continue
                src = (coupling.src.component, coupling.src.port)
                dst = (coupling.dst.component, coupling.dst.port)
                routes.append((src, dst))
                out_degree[src] = out_degree.get(src, 0) + 1
            for sim in self._sim_list:
                spec = sim.model.spec
                dangling = tuple(p for p in spec.output_ports
                                 if out_degree.get((spec.name, p), 0) == 0)
                if dangling:
                    self._uncoupled[spec.name] = dangling
            self._routes = routes
            return

        # Hierarchical execution: materialize boundary bags and record which
        # bags and atomic ports feed at least one coupling, so dangling
        # values can be counted as dropped.
        atomic_out_degree: dict[tuple[tuple[str, ...], str], int] = {}

        def collect(level: ModelGraph, path: tuple[str, ...]) -> None:
            for child in level.components():
                if isinstance(child, ModelGraph):
                    child_path = path + (child.name,)
                    for port in child.input_ports:
                        self._boundary[(child_path, port, "in")] = []
                    for port in child.output_ports:
                        self._boundary[(child_path, port, "out")] = []
                    collect(child, child_path)
            for coupling in level.couplings:
                ref = coupling.src
                if ref.component == level.name:
                    self._boundary_consumed.add((path, ref.port, "in"))
                elif ref.component in level.coupleds:
                    self._boundary_consumed.add((path + (ref.component,), ref.port, "out"))
                else:
                    key = (path + (ref.component,), ref.port)
                    atomic_out_degree[key] = atomic_out_degree.get(key, 0) + 1

        for port in self.exec_graph.input_ports:
            self._boundary[((), port, "in")] = []
        for port in self.exec_graph.output_ports:
            self._boundary[((), port, "out")] = []
        collect(self.exec_graph, ())
        for path, spec in self.exec_graph.walk_atomics():
            dangling = tuple(p for p in spec.output_ports
                             if atomic_out_degree.get((path, p), 0) == 0)
            if dangling:
                self._uncoupled[self._rename[path]] = dangling

    def _bag_for(self, path: tuple[str, ...], level: ModelGraph, ref, as_source: bool) -> list:
        if ref.component == level.name:
            side = "in" if ref.direction == INPUT else "out"
            return self._boundary[(path, ref.port, side)]
        if ref.component in level.atomics:
            sim = self.simulators[self._rename[path + (ref.component,)]]
            bags = sim.model.output_bags if as_source else sim.model.input_bags
            return bags[ref.port]
        side = "out" if as_source else "in"
        return self._boundary[(path + (ref.component,), ref.port, side)]

    def _propagate(self) -> None:
        if self._routes is not None:
            for src, dst in self._routes:
                values = self.simulators[src[0]].model.output_bags[src[1]]
                if values:
                    self.simulators[dst[0]].model.input_bags[dst[1]].extend(values)
        else:
            self._propagate_output(self.exec_graph, ())
            self._propagate_input(self.exec_graph, ())
        for name, ports in self._uncoupled.items():
            bags = self.simulators[name].model.output_bags
            for port in ports:
                self.dropped_events += len(bags[port])

    def _propagate_output(self, level: ModelGraph, path: tuple[str, ...]) -> None:
        for child in level.components():
            if isinstance(child, ModelGraph):
                self._propagate_output(child, path + (child.name,))
        for coupling in level.couplings:
            if coupling.kind == EIC:
                continue
            src = self._bag_for(path, level, coupling.src, as_source=True)
            if src:
                self._bag_for(path, level, coupling.dst, as_source=False).extend(src)

    def _propagate_input(self, level: ModelGraph, path: tuple[str, ...]) -> None:
        for coupling in level.couplings:
            if coupling.kind != EIC:
                continue
            src = self._bag_for(path, level, coupling.src, as_source=True)
            if src:
                self._bag_for(path, level, coupling.dst, as_source=False).extend(src)
        for child in level.components():
            if isinstance(child, ModelGraph):
                self._propagate_input(child, path + (child.name,))

    def _clear_boundaries(self) -> None:
        if self._routes is not None:
            return
        for key, bag in self._boundary.items():
            if bag and key not in self._boundary_consumed:
                self.dropped_events += len(bag)
            bag.clear()

"""Modeling layer: ports, event values, atomic specs, and coupled-model graphs.

The modeling layer is deliberately independent of any coordinator. A
:class:`ModelGraph` describes structure only (components, ports, couplings);
behavioral state lives in per-run behavior instances created from the
registry in :mod:`pdevsim.behaviors`. Once a coordinator is built over a
graph the graph is frozen and can be shared freely between executors.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Union

EventValue = Union[int, float, str, list]

INPUT = "input"
OUTPUT = "output"

EIC = "EIC"
IC = "IC"
EOC = "EOC"


class ModelError(Exception):
    """Structural violation while building or using a model graph."""


def check_event_value(value: EventValue) -> None:
    """Reject payloads outside the closed event-value set.

    Allowed payloads are int, finite float, str, and (nested) lists of
    those. The closed set is what guarantees that anything the sequential
    backend can carry also round-trips through the distributed wire.
    """
    if isinstance(value, bool):
        raise ModelError(f"bool is not an event value: {value!r}")
    if isinstance(value, (int, str)):
        return
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            raise ModelError(f"event reals must be finite: {value!r}")
        return
    if isinstance(value, list):
        for item in value:
            check_event_value(item)
        return
    raise ModelError(f"unsupported event payload type: {type(value).__name__}")


@dataclass(frozen=True)
class PortRef:
    """Reference to one named port on a component or on a graph boundary."""

    component: str
    port: str
    direction: str  # INPUT or OUTPUT

    def __post_init__(self) -> None:
        if self.direction not in (INPUT, OUTPUT):
            raise ModelError(f"bad port direction {self.direction!r}")

    def __str__(self) -> str:  # pragma: no cover - debug aid
        return f"{self.component}.{self.port}/{self.direction[:3]}"


@dataclass(frozen=True)
class Coupling:
    """One stored coupling with its auto-classified kind."""

    src: PortRef
    dst: PortRef
    kind: str  # EIC, IC or EOC


@dataclass(frozen=True)
class AtomicSpec:
    """Structural description of one atomic component.

    ``model`` names a registered behavior type; ``delay_int``/``delay_ext``
    parameterize it. For the benchmark atomic they are CPU-seconds burned in
    the transition functions; other behaviors document their own reading.
    Specs are immutable; run state lives in behavior instances.
    """

    name: str
    model: str
    delay_int: float = 0.0
    delay_ext: float = 0.0
    input_ports: tuple[str, ...] = ("in",)
    output_ports: tuple[str, ...] = ("out",)

    def __post_init__(self) -> None:
        if not self.name:
            raise ModelError("atomic name must be non-empty")
        for ports in (self.input_ports, self.output_ports):
            if len(set(ports)) != len(ports):
                raise ModelError(f"duplicate port name on atomic {self.name!r}")


@dataclass(frozen=True)
class Violation:
    severity: str  # "error" | "warning"
    where: str     # path of the coupled model the finding belongs to
    message: str


class ModelGraph:
    """A coupled model: children plus EIC/IC/EOC couplings.

    Graphs are built with :meth:`add_component` and :meth:`couple` (or the
    name-based :meth:`connect`) and become immutable once :meth:`freeze` is
    called, which every coordinator does on construction.
    """

    def __init__(self, name: str, input_ports: Iterable[str] = (),
                 output_ports: Iterable[str] = ()) -> None:
        if not name:
            raise ModelError("coupled model name must be non-empty")
        self.name = name
        self.input_ports = tuple(input_ports)
        self.output_ports = tuple(output_ports)
        if len(set(self.input_ports)) != len(self.input_ports) or \
                len(set(self.output_ports)) != len(self.output_ports):
            raise ModelError(f"duplicate boundary port on {name!r}")
        self.atomics: dict[str, AtomicSpec] = {}
        self.coupleds: dict[str, "ModelGraph"] = {}
        self.couplings: list[Coupling] = []
        self._order: list[str] = []  # child names in document order
        self._frozen = False

    # -- construction -----------------------------------------------------

    def _check_mutable(self) -> None:
        if self._frozen:
            raise ModelError(f"model {self.name!r} is frozen")

    def add_component(self, child: Union[AtomicSpec, "ModelGraph"]) -> "ModelGraph":
        """Register a child atomic spec or coupled model at this level."""
        self._check_mutable()
        if child.name == self.name or child.name in self.atomics or child.name in self.coupleds:
            raise ModelError(f"duplicate component name {child.name!r} in {self.name!r}")
        if isinstance(child, AtomicSpec):
            self.atomics[child.name] = child
        elif isinstance(child, ModelGraph):
            self.coupleds[child.name] = child
        else:
            raise ModelError(f"cannot add {type(child).__name__} as a component")
        self._order.append(child.name)
        return self

    def components(self) -> Iterator[Union[AtomicSpec, "ModelGraph"]]:
        """Children in document order, atomics and coupleds interleaved."""
        for name in self._order:
            yield self.atomics.get(name) or self.coupleds[name]

    def couple(self, src: PortRef, dst: PortRef) -> "ModelGraph":
        """Store a coupling after classifying it as EIC, IC or EOC."""
        self._check_mutable()
        kind = self.classify(src, dst)
        self.couplings.append(Coupling(src, dst, kind))
        return self

    def connect(self, src_component: str, src_port: str,
                dst_component: str, dst_port: str) -> "ModelGraph":
        """Name-based convenience wrapper around :meth:`couple`."""
        src_dir = INPUT if src_component == self.name else OUTPUT
        dst_dir = OUTPUT if dst_component == self.name else INPUT
        return self.couple(PortRef(src_component, src_port, src_dir),
                           PortRef(dst_component, dst_port, dst_dir))

    def freeze(self) -> "ModelGraph":
        self._frozen = True
        for child in self.coupleds.values():
            child.freeze()
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    # -- lookup ------------------------------------------------------------

    def component_ports(self, component: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
        """Input and output port names of a component, or of this graph."""
        if component == self.name:
            return self.input_ports, self.output_ports
        if component in self.atomics:
            spec = self.atomics[component]
            return spec.input_ports, spec.output_ports
        if component in self.coupleds:
            child = self.coupleds[component]
            return child.input_ports, child.output_ports
        raise ModelError(f"no component {component!r} in {self.name!r}")

    def _check_port(self, ref: PortRef) -> None:
        inputs, outputs = self.component_ports(ref.component)
        ports = inputs if ref.direction == INPUT else outputs
        if ref.port not in ports:
            raise ModelError(
                f"no {ref.direction} port {ref.port!r} on {ref.component!r} in {self.name!r}")

    def classify(self, src: PortRef, dst: PortRef) -> str:
        """Derive the coupling kind from endpoint ownership and direction.

        EIC: graph input to child input; IC: child output to child input;
        EOC: child output to graph output. Anything else is illegal,
        including a direct shortcut from the graph's own input to its own
        output.
        """
        self._check_port(src)
        self._check_port(dst)
        src_is_self = src.component == self.name
        dst_is_self = dst.component == self.name
        if src_is_self and dst_is_self:
            raise ModelError(
                f"cannot couple boundary to boundary on {self.name!r} without a component")
        if src_is_self:
            if src.direction != INPUT or dst.direction != INPUT:
                raise ModelError(f"illegal EIC pattern {src} -> {dst} in {self.name!r}")
            return EIC
        if dst_is_self:
            if src.direction != OUTPUT or dst.direction != OUTPUT:
                raise ModelError(f"illegal EOC pattern {src} -> {dst} in {self.name!r}")
            return EOC
        if src.direction != OUTPUT or dst.direction != INPUT:
            raise ModelError(f"illegal IC pattern {src} -> {dst} in {self.name!r}")
        return IC

    # -- traversal ----------------------------------------------------------

    def walk_atomics(self, path: tuple[str, ...] = ()) -> Iterator[tuple[tuple[str, ...], AtomicSpec]]:
        """Yield (path, spec) for every atomic, depth-first in document order.

        ``path`` is the chain of enclosing coupled names plus the leaf name,
        excluding the root.
        """
        for child in self.components():
            if isinstance(child, AtomicSpec):
                yield path + (child.name,), child
            else:
                yield from child.walk_atomics(path + (child.name,))

    def atomic_count(self) -> int:
        return sum(1 for _ in self.walk_atomics())

    def is_flat(self) -> bool:
        return not self.coupleds

    # -- identity ------------------------------------------------------------

    def _canonical(self) -> dict:
        children = []
        for child in self.components():
            if isinstance(child, AtomicSpec):
                children.append(["atomic", child.name, child.model, child.delay_int,
                                 child.delay_ext, list(child.input_ports),
                                 list(child.output_ports)])
            else:
                children.append(["coupled", child._canonical()])
        return {
            "name": self.name,
            "in": list(self.input_ports),
            "out": list(self.output_ports),
            "children": children,
            "couplings": [
                [c.src.component, c.src.port, c.src.direction,
                 c.dst.component, c.dst.port, c.dst.direction, c.kind]
                for c in self.couplings
            ],
        }

    def structural_hash(self) -> str:
        """Order-preserving digest of the full structure; used to assert
        that coordinators never mutate a model."""
        blob = json.dumps(self._canonical(), separators=(",", ":"), sort_keys=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def structurally_equal(self, other: "ModelGraph") -> bool:
        return self.structural_hash() == other.structural_hash()

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return (f"ModelGraph({self.name!r}, atomics={len(self.atomics)}, "
                f"coupleds={len(self.coupleds)}, couplings={len(self.couplings)})")


# -- validation ---------------------------------------------------------------


def validate(graph: ModelGraph, include_warnings: bool = False) -> list[Violation]:
    """Check all graph invariants recursively.

    Returns an empty list iff every structural invariant holds. With
    ``include_warnings`` the check also reports coupling cycles among
    atomics (possible zero-delay loops) as warnings; cycles are legal but
    worth surfacing.
    """
    violations: list[Violation] = []
    _validate_level(graph, graph.name, violations)
    if include_warnings and not violations:
        for cycle in _coupling_cycles(graph):
            violations.append(Violation(
                "warning", graph.name,
                "coupling cycle among atomics (possible zero-delay loop): "
                + " -> ".join(cycle)))
    return violations


def _validate_level(graph: ModelGraph, where: str, out: list[Violation]) -> None:
    seen: set[str] = set()
    for name in list(graph.atomics) + list(graph.coupleds):
        if name in seen or name == graph.name:
            out.append(Violation("error", where, f"duplicate component name {name!r}"))
        seen.add(name)
    for coupling in graph.couplings:
        try:
            kind = graph.classify(coupling.src, coupling.dst)
        except ModelError as exc:
            out.append(Violation("error", where, str(exc)))
            continue
        if kind != coupling.kind:
            out.append(Violation(
                "error", where,
                f"stored kind {coupling.kind} does not match re-derived {kind} "
                f"for {coupling.src} -> {coupling.dst}"))
    for child in graph.coupleds.values():
        _validate_level(child, f"{where}.{child.name}", out)


def _coupling_cycles(graph: ModelGraph) -> list[list[str]]:
    """Cycles in the atomic-to-atomic event graph of the flattened routes."""
    edges: dict[str, set[str]] = {}
    flat = graph if graph.is_flat() else flatten(graph)
    for coupling in flat.couplings:
        if coupling.kind == IC:
            edges.setdefault(coupling.src.component, set()).add(coupling.dst.component)
    cycles: list[list[str]] = []
    visiting: dict[str, int] = {}  # 1 = on stack, 2 = done
    stack: list[str] = []

    def visit(node: str) -> None:
        visiting[node] = 1
        stack.append(node)
        for nxt in sorted(edges.get(node, ())):
            state = visiting.get(nxt)
            if state == 1:
                cycles.append(stack[stack.index(nxt):] + [nxt])
            elif state is None:
                visit(nxt)
        stack.pop()
        visiting[node] = 2

    for node in sorted(edges):
        if node not in visiting:
            visit(node)
    return cycles


# -- flattening ---------------------------------------------------------------

# A node in the route walk: (component path, port name, side). Side "in" is
# an input-facing port (atomic input or coupled boundary input), "out" an
# output-facing one. The empty path is the root boundary.
_Node = tuple[tuple[str, ...], str, str]


def flatten(graph: ModelGraph) -> ModelGraph:
    """Rewrite a hierarchy into a single-level graph of atomics only.

    Every atomic appears exactly once (path-qualified names are substituted
    only when two leaves collide), and every event path through any number
    of coupled boundaries becomes exactly one direct coupling. Routes are
    enumerated deterministically: boundary inputs first, then atomic
    outputs in depth-first insertion order. Models in which two senders hit
    the same input port in the same cycle may therefore observe a different
    within-bag merge order than non-flattened execution; each execution
    mode is individually deterministic.
    """
    errors = [v for v in validate(graph) if v.severity == "error"]
    if errors:
        raise ModelError("cannot flatten invalid graph: " + errors[0].message)
    if graph.is_flat():
        clone = ModelGraph(graph.name, graph.input_ports, graph.output_ports)
        for child in graph.components():
            clone.add_component(child)
        clone.couplings.extend(graph.couplings)
        return clone

    rename = _leaf_names(graph)
    flat = ModelGraph(graph.name, graph.input_ports, graph.output_ports)
    for path, spec in graph.walk_atomics():
        final = rename[path]
        if final != spec.name:
            spec = AtomicSpec(final, spec.model, spec.delay_int, spec.delay_ext,
                              spec.input_ports, spec.output_ports)
        flat.add_component(spec)

    adjacency = _adjacency(graph)
    atomic_paths = {path for path, _ in graph.walk_atomics()}

    def expand(node: _Node, out: list[_Node]) -> None:
        path, port, side = node
        is_atomic_in = side == "in" and path in atomic_paths
        is_root_out = side == "out" and path == ()
        if is_atomic_in or is_root_out:
            out.append(node)
            return
        for nxt in adjacency.get(node, ()):
            expand(nxt, out)

    def add_route(src_node: _Node, dst_node: _Node) -> None:
        s_path, s_port, s_side = src_node
        d_path, d_port, _ = dst_node
        src = (PortRef(graph.name, s_port, INPUT) if s_path == ()
               else PortRef(rename[s_path], s_port, OUTPUT))
        dst = (PortRef(graph.name, d_port, OUTPUT) if d_path == ()
               else PortRef(rename[d_path], d_port, INPUT))
        flat.couple(src, dst)

    for port in graph.input_ports:
        sinks: list[_Node] = []
        expand(((), port, "in"), sinks)
        for sink in sinks:
            add_route(((), port, "in"), sink)
    for path, spec in graph.walk_atomics():
        for port in spec.output_ports:
            sinks = []
            expand((path, port, "out"), sinks)
            for sink in sinks:
                add_route((path, port, "out"), sink)
    return flat


def _leaf_names(graph: ModelGraph) -> dict[tuple[str, ...], str]:
    """Map atomic paths to flattened names, qualifying only collisions."""
    counts: dict[str, int] = {}
    for path, spec in graph.walk_atomics():
        counts[spec.name] = counts.get(spec.name, 0) + 1
    rename: dict[tuple[str, ...], str] = {}
    for path, spec in graph.walk_atomics():
        rename[path] = spec.name if counts[spec.name] == 1 else ".".join(path)
    return rename


def _adjacency(graph: ModelGraph) -> dict[_Node, list[_Node]]:
    """Edges between route nodes, gathered level by level in document order."""
    edges: dict[_Node, list[_Node]] = {}

    def node_for(level_path: tuple[str, ...], level: ModelGraph,
                 ref: PortRef, as_source: bool) -> _Node:
        if ref.component == level.name:
            # Boundary port of the level itself.
            side = "in" if as_source else "out"
            return level_path, ref.port, side
        child_path = level_path + (ref.component,)
        side = "out" if as_source else "in"
        return child_path, ref.port, side

    def visit(level: ModelGraph, level_path: tuple[str, ...]) -> None:
        for coupling in level.couplings:
            src = node_for(level_path, level, coupling.src, as_source=True)
            dst = node_for(level_path, level, coupling.dst, as_source=False)
            edges.setdefault(src, []).append(dst)
        for child in level.coupleds.values():
            visit(child, level_path + (child.name,))

    visit(graph, ())
    return edges

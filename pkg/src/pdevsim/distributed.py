"""Socket-distributed backend.

One simulator service per atomic model listens on two TCP ports: the main
port takes the coordinator's protocol commands, the auxiliary port takes
PROPAGATE frames pushed directly by peer simulators. The root coordinator
drives the abstract-protocol cycle (collect next times, broadcast the
clock, run outputs, run transitions) and never relays event values; output
propagation happens between the services themselves.

A service pushes one PROPAGATE frame per outgoing coupling whenever it ran
its output function, including empty ones. Receivers bucket frames by
(sender, destination port) and assemble their input bags in plan coupling
order at transition time, which makes bag contents byte-identical to the
sequential backend even under concurrent arrivals.
"""

from __future__ import annotations

import math
import socket
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .behaviors import Counters, create_behavior
from .kernel import RunReport, SimulationError, Simulator, TraceEntry
from .model import IC, ModelGraph, validate
from . import wire
from .wire import (ACK, CLOCK, DELTFCN, EXIT, GET_TN, INIT, LAMBDA, PROPAGATE,
                   TN_REPLY, ProtocolError, WireFrame, read_frame, write_frame)

_ERROR_MARK = "__error__"


@dataclass(frozen=True)
class Endpoint:
    """Where a simulation entity listens: coordinator commands on
    ``main_port``, peer propagation on ``aux_port``."""

    host: str
    main_port: int
    aux_port: int = 0

    def __post_init__(self) -> None:
        for port in (self.main_port, self.aux_port):
            if port and not 1 <= port <= 65535:
                raise SimulationError(f"port {port} out of range on {self.host}")

    def main_addr(self) -> tuple[str, int]:
        return self.host, self.main_port

    def aux_addr(self) -> tuple[str, int]:
        return self.host, self.aux_port

    def __str__(self) -> str:
        return f"{self.host}:{self.main_port}"


@dataclass(frozen=True)
class Timeouts:
    connect: float = 5.0
    read: float = 60.0


@dataclass
class DistributedPlan:
    """A flattened closed model plus one endpoint per atomic."""

    graph: ModelGraph
    endpoints: dict[str, Endpoint]
    coordinator: Endpoint

    def check(self) -> None:
        errors = [v for v in validate(self.graph) if v.severity == "error"]
        if errors:
            raise SimulationError(f"invalid plan graph: {errors[0].message}")
        if not self.graph.is_flat():
            raise SimulationError("distributed plan graph must be flattened")
        for coupling in self.graph.couplings:
            if coupling.kind != IC:
                raise SimulationError(
                    "distributed plan must be a closed model "
                    f"(found {coupling.kind} coupling)")
        atoms = set(self.graph.atomics)
        missing = sorted(atoms - set(self.endpoints))
        if missing:
            raise SimulationError(f"no endpoint for atomic {missing[0]!r}")
        unknown = sorted(set(self.endpoints) - atoms)
        if unknown:
            raise SimulationError(f"endpoint for unknown atomic {unknown[0]!r}")
        seen: set[tuple[str, int]] = set()
        for endpoint in list(self.endpoints.values()) + [self.coordinator]:
            addr = endpoint.main_addr()
            if addr in seen:
                raise SimulationError(f"duplicate endpoint {endpoint}")
            seen.add(addr)


def _configure(sock: socket.socket, read_timeout: float | None) -> None:
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    sock.settimeout(read_timeout)


def _shutdown_close(sock: socket.socket | None) -> None:
    """Close a socket so that a thread blocked on it wakes up."""
    if sock is None:
        return
    try:
        sock.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
    try:
        sock.close()
    except OSError:
        pass


def trace_to_payload(entries: list[TraceEntry]) -> list:
    return [[e.time, e.kind,
             [[p, list(v)] for p, v in e.inputs],
             [[p, list(v)] for p, v in e.outputs]] for e in entries]


def trace_from_payload(payload) -> list[TraceEntry]:
    entries = []
    for t, kind, inputs, outputs in payload:
        entries.append(TraceEntry(
            float(t), kind,
            tuple((p, tuple(v)) for p, v in inputs),
            tuple((p, tuple(v)) for p, v in outputs)))
    return entries


class SimulatorService:
    """Hosts one atomic model behind the wire protocol."""

    def __init__(self, plan: DistributedPlan, atomic_name: str, *,
                 timeouts: Timeouts | None = None) -> None:
        plan.check()
        if atomic_name not in plan.graph.atomics:
            raise SimulationError(f"unknown atomic {atomic_name!r} in plan "
                                  f"{plan.graph.name!r}")
        self.plan = plan
        self.name = atomic_name
        self.endpoint = plan.endpoints[atomic_name]
        self.timeouts = timeouts or Timeouts()
        self.counters = Counters()
        self.simulator: Simulator | None = None
        # Outgoing couplings in plan order: (source port, target, target port).
        self.outgoing = [
            (c.src.port, c.dst.component, c.dst.port)
            for c in plan.graph.couplings if c.src.component == atomic_name]
        self._uncoupled = tuple(
            p for p in plan.graph.atomics[atomic_name].output_ports
            if all(src_port != p for src_port, _, _ in self.outgoing))
        # Incoming coupling keys in plan order drive bag assembly.
        self.incoming = [
            (c.src.component, c.dst.port)
            for c in plan.graph.couplings if c.dst.component == atomic_name]
        self._pending: dict[tuple[str, str], list[tuple]] = {}
        self._pending_lock = threading.Lock()
        self._peers: dict[str, socket.socket] = {}
        self._inbound: list[socket.socket] = []
        self._clock_t = 0.0
        self._trace_enabled = False
        self.dropped = 0
        self._stop = threading.Event()
        self._main_listener: socket.socket | None = None
        self._aux_listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> "SimulatorService":
        try:
            self._main_listener = self._listen(self.endpoint.main_port)
            self._aux_listener = self._listen(self.endpoint.aux_port)
        except OSError as exc:
            self.stop()
            raise SimulationError(
                f"cannot bind {self.name!r} on {self.endpoint.host} "
                f"ports {self.endpoint.main_port}/{self.endpoint.aux_port}: {exc}") from exc
        for target, thread_name in ((self._main_loop, "main"), (self._aux_accept_loop, "aux")):
            thread = threading.Thread(target=target, daemon=True,
                                      name=f"svc-{self.name}-{thread_name}")
            thread.start()
            self._threads.append(thread)
        return self

    def _listen(self, port: int) -> socket.socket:
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.endpoint.host, port))
        listener.listen(16)
        listener.settimeout(0.5)  # lets accept loops notice a stop request
        return listener

    def join(self, timeout: float | None = None) -> None:
        for thread in list(self._threads):
            thread.join(timeout)

    def stop(self) -> None:
        self._stop.set()
        for sock in (self._main_listener, self._aux_listener,
                     *self._peers.values(), *self._inbound):
            _shutdown_close(sock)
        self._peers.clear()
        self._inbound.clear()

    # -- main command loop --------------------------------------------------------

    def _main_loop(self) -> None:
        # Sessions are accepted until EXIT arrives; a connection that closes
        # without EXIT (for example a readiness probe) is harmless.
        listener = self._main_listener
        while not self._stop.is_set():
            try:
                conn, _ = listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return  # stopped
            _configure(conn, None)
            try:
                while not self._stop.is_set():
                    frame = read_frame(conn)
                    if frame is None:
                        break
                    reply = self._handle(frame)
                    write_frame(conn, reply)
                    if frame.command == EXIT:
                        self.stop()
                        return
            except (ProtocolError, OSError):
                pass
            finally:
                try:
                    conn.close()
                except OSError:
                    pass

    def _handle(self, frame: WireFrame) -> WireFrame:
        try:
            return self._dispatch(frame)
        except SimulationError as exc:
            return WireFrame(ACK, sender=self.name, values=(_ERROR_MARK, str(exc)))

    def _dispatch(self, frame: WireFrame) -> WireFrame:
        command = frame.command
        if command == INIT:
            self._trace_enabled = bool(frame.values and frame.values[0])
            behavior = create_behavior(self.plan.graph.atomics[self.name], self.counters)
            self.simulator = Simulator(behavior, trace=self._trace_enabled)
            self.simulator.initialize()
            return WireFrame(ACK, sender=self.name)
        if self.simulator is None:
            raise SimulationError(f"simulator {self.name!r} got {command} before INIT")
        if command == GET_TN:
            return WireFrame(TN_REPLY, sender=self.name, time=self.simulator.tN)
        if command == CLOCK:
            if frame.time is None:
                raise SimulationError("CLOCK frame without time")
            self._clock_t = frame.time
            return WireFrame(ACK, sender=self.name)
        if command == LAMBDA:
            self._run_lambda()
            return WireFrame(ACK, sender=self.name)
        if command == DELTFCN:
            self._run_delta()
            return WireFrame(ACK, sender=self.name)
        if command == EXIT:
            payload = [self.counters.num_delt_ints, self.counters.num_delt_exts,
                       self.counters.num_of_events, self.dropped]
            trace_blob = (trace_to_payload(self.simulator.trace)
                          if self._trace_enabled else [])
            return WireFrame(ACK, sender=self.name, values=(*payload, trace_blob))
        raise SimulationError(f"unexpected command {command} on main connection")

    def _run_lambda(self) -> None:
        sim = self.simulator
        imminent = sim.tN == self._clock_t and not math.isinf(self._clock_t)
        if imminent:
            sim.run_lambda(self._clock_t)
        # Imminent simulators push one frame per outgoing coupling, empty
        # or not, so receivers can line buckets up with plan order.
        if imminent:
            for src_port, target, target_port in self.outgoing:
                values = tuple(sim.model.output_bags[src_port])
                self._push(target, WireFrame(
                    PROPAGATE, sender=self.name, port=target_port, values=values))
            for port in self._uncoupled:
                self.dropped += len(sim.model.output_bags[port])

    def _push(self, target: str, frame: WireFrame) -> None:
        sock = self._peers.get(target)
        if sock is None:
            endpoint = self.plan.endpoints[target]
            try:
                sock = socket.create_connection(endpoint.aux_addr(),
                                                timeout=self.timeouts.connect)
            except OSError as exc:
                raise SimulationError(
                    f"peer {target!r} at {endpoint.host}:{endpoint.aux_port} "
                    f"unreachable: {exc}") from exc
            _configure(sock, self.timeouts.read)
            self._peers[target] = sock
        try:
            write_frame(sock, frame)
            reply = read_frame(sock)
        except (OSError, ProtocolError) as exc:
            raise SimulationError(f"propagation to {target!r} failed: {exc}") from exc
        if reply is None or reply.command != ACK:
            raise SimulationError(f"peer {target!r} did not acknowledge propagation")

    def _run_delta(self) -> None:
        sim = self.simulator
        with self._pending_lock:
            for key in self.incoming:
                batches = self._pending.get(key)
                if batches:
                    values = batches.pop(0)
                    if values:
                        sim.model.input_bags[key[1]].extend(values)
            self._pending.clear()
        sim.run_delta(self._clock_t)

    # -- peer propagation intake ------------------------------------------------------

    def _aux_accept_loop(self) -> None:
        listener = self._aux_listener
        while not self._stop.is_set():
            try:
                conn, _ = listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            _configure(conn, None)
            self._inbound.append(conn)
            thread = threading.Thread(target=self._aux_serve, args=(conn,),
                                      daemon=True, name=f"svc-{self.name}-peer")
            thread.start()
            self._threads.append(thread)

    def _aux_serve(self, conn: socket.socket) -> None:
        try:
            while not self._stop.is_set():
                frame = read_frame(conn)
                if frame is None:
                    break
                if frame.command != PROPAGATE:
                    raise ProtocolError(
                        f"unexpected {frame.command} on aux port of {self.name!r}")
                with self._pending_lock:
                    self._pending.setdefault((frame.sender, frame.port), []).append(
                        frame.values)
                write_frame(conn, WireFrame(ACK, sender=self.name))
        except (ProtocolError, OSError):
            pass
        finally:
            try:
                conn.close()
            except OSError:
                pass


def serve_simulator(plan: DistributedPlan, atomic_name: str, *,
                    timeouts: Timeouts | None = None) -> SimulatorService:
    """Start (and return) the service hosting ``atomic_name``."""
    return SimulatorService(plan, atomic_name, timeouts=timeouts).start()


class DistributedCoordinator:
    """Drives the abstract-protocol command cycle over simulator services."""

    backend_name = "distributed"

    def __init__(self, plan: DistributedPlan, *, trace: bool = False,
                 timeouts: Timeouts | None = None) -> None:
        plan.check()
        self.plan = plan
        self.trace_enabled = trace
        self.timeouts = timeouts or Timeouts()
        self.names = list(plan.graph.atomics)
        self.frames_sent: dict[str, int] = {}
        self.frames_received: dict[str, int] = {}
        self._conns: dict[str, socket.socket] = {}
        self._pool: ThreadPoolExecutor | None = None

    # -- plumbing ---------------------------------------------------------------

    def _connect_all(self) -> None:
        self._pool = ThreadPoolExecutor(max_workers=max(len(self.names), 1),
                                        thread_name_prefix="coord")

        def connect(name: str) -> tuple[str, socket.socket]:
            endpoint = self.plan.endpoints[name]
            try:
                sock = socket.create_connection(endpoint.main_addr(),
                                                timeout=self.timeouts.connect)
            except OSError as exc:
                raise SimulationError(
                    f"simulator {name!r} at {endpoint} unreachable: {exc}") from exc
            _configure(sock, self.timeouts.read)
            return name, sock

        for name, sock in self._pool.map(connect, self.names):
            self._conns[name] = sock

    def _roundtrip(self, name: str, frame: WireFrame) -> WireFrame:
        sock = self._conns[name]
        endpoint = self.plan.endpoints[name]
        try:
            write_frame(sock, frame)
            self._count(self.frames_sent, frame.command)
            reply = read_frame(sock)
        except socket.timeout as exc:
            raise SimulationError(
                f"simulator {name!r} at {endpoint} timed out: {exc}") from exc
        except (OSError, ProtocolError) as exc:
            raise SimulationError(
                f"simulator {name!r} at {endpoint} failed: {exc}") from exc
        if reply is None:
            raise SimulationError(f"simulator {name!r} at {endpoint} closed the connection")
        self._count(self.frames_received, reply.command)
        if reply.values[:1] == (_ERROR_MARK,):
            raise SimulationError(f"simulator {name!r} reported: {reply.values[1]}")
        return reply

    def _count(self, histogram: dict[str, int], command: str) -> None:
        histogram[command] = histogram.get(command, 0) + 1

    def _broadcast(self, frame: WireFrame, expect: str) -> dict[str, WireFrame]:
        replies: dict[str, WireFrame] = {}
        futures = {name: self._pool.submit(self._roundtrip, name, frame)
                   for name in self.names}
        for name, future in futures.items():
            reply = future.result()
            if reply.command != expect:
                raise SimulationError(
                    f"simulator {name!r} replied {reply.command}, expected {expect}")
            replies[name] = reply
        return replies

    def close(self) -> None:
        for sock in self._conns.values():
            try:
                sock.close()
            except OSError:
                pass
        self._conns.clear()
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    # -- the protocol ------------------------------------------------------------------

    def run(self, max_iterations: int | None = None) -> RunReport:
        started = time.perf_counter()
        self._connect_all()
        try:
            init = WireFrame(INIT, values=(1 if self.trace_enabled else 0,))
            self._broadcast(init, ACK)
            cycles = 0
            while max_iterations is None or cycles < max_iterations:
                replies = self._broadcast(WireFrame(GET_TN), TN_REPLY)
                times = []
                for name, reply in replies.items():
                    if reply.time is None:
                        raise SimulationError(f"TN reply without time from {name!r}")
                    times.append(reply.time)
                tn = min(times)
                if math.isinf(tn):
                    break
                self._broadcast(WireFrame(CLOCK, time=tn), ACK)
                self._broadcast(WireFrame(LAMBDA), ACK)
                self._broadcast(WireFrame(DELTFCN), ACK)
                cycles += 1
            exits = self._broadcast(WireFrame(EXIT), ACK)
        finally:
            self.close()
        ints = exts = events = dropped = 0
        traces: dict[str, list[TraceEntry]] = {}
        for name, reply in exits.items():
            values = reply.values
            if len(values) < 5:
                raise SimulationError(f"short exit payload from {name!r}")
            ints += values[0]
            exts += values[1]
            events += values[2]
            dropped += values[3]
            if self.trace_enabled:
                traces[name] = trace_from_payload(values[4])
        wall = time.perf_counter() - started
        return RunReport(
            model=self.plan.graph.name, backend=self.backend_name,
            workers_pools=str(len(self.names)), cycles=cycles,
            wall_seconds=wall, num_delt_ints=ints, num_delt_exts=exts,
            num_of_events=events,
            traces=traces if self.trace_enabled else None,
            diagnostics={"dropped_events": dropped,
                         "frames_sent": dict(self.frames_sent),
                         "frames_received": dict(self.frames_received)})


def run_coordinator(plan: DistributedPlan, max_iterations: int | None = None, *,
                    trace: bool = False,
                    timeouts: Timeouts | None = None) -> RunReport:
    """Run the distributed protocol over already-listening services."""
    return DistributedCoordinator(plan, trace=trace, timeouts=timeouts).run(max_iterations)

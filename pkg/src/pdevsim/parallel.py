"""Worker-pool parallel coordinator.

Same semantics as the sequential kernel: the output and transition phases
are fanned out over named thread pools, pools run strictly one after
another within a phase, and value propagation stays single-threaded
between the two phases, which is the barrier that makes results identical
to sequential execution. The time-advance scan is cheap and stays
single-threaded.
"""

from __future__ import annotations

import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .behaviors import Counters
from .kernel import SequentialCoordinator, SimulationError, Simulator
from .model import ModelGraph


@dataclass(frozen=True)
class PoolSpec:
    """One named worker pool; order of declaration is execution order."""

    name: str
    workers: int

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise SimulationError(f"pool {self.name!r} needs at least one worker")


def default_workers() -> int:
    return os.cpu_count() or 1


@dataclass
class PoolPlan:
    """Assignment of every atomic to exactly one pool.

    ``assignment`` insertion order is also the task submission order inside
    each pool, which lets a caller interleave heavy atomics across workers.
    """

    pools: tuple[PoolSpec, ...]
    assignment: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        names = [p.name for p in self.pools]
        if len(set(names)) != len(names):
            raise SimulationError("duplicate pool names in plan")

    @classmethod
    def single_pool(cls, atomics, workers: int | None = None,
                    name: str = "main") -> "PoolPlan":
        workers = default_workers() if workers is None else workers
        return cls((PoolSpec(name, workers),), {a: name for a in atomics})

    def pool_members(self) -> dict[str, list[str]]:
        members: dict[str, list[str]] = {p.name: [] for p in self.pools}
        for atomic, pool in self.assignment.items():
            if pool not in members:
                raise SimulationError(
                    f"atomic {atomic!r} assigned to unknown pool {pool!r}")
            members[pool].append(atomic)
        return members

    def label(self) -> str:
        return "x".join(str(p.workers) for p in self.pools)


@dataclass(frozen=True)
class PhaseTask:
    """One unit of phase work: run one simulator's lambda or delta."""

    pool: str
    phase: str  # "lambda" | "delta"
    simulator: Simulator


@dataclass(frozen=True)
class TaskLogEntry:
    """Instrumentation record used by the barrier and pool-order tests."""

    cycle: int
    pool: str
    phase: str
    atomic: str
    start: float
    end: float


class ParallelCoordinator(SequentialCoordinator):
    """Pooled execution of the lambda and delta phases over a flat graph."""

    backend_name = "parallel"

    def __init__(self, graph: ModelGraph, plan: PoolPlan, *,
                 trace: bool = False, profile: bool = False,
                 counters: Counters | None = None,
                 log_tasks: bool = False) -> None:
        super().__init__(graph, flatten_graph=True, trace=trace,
                         profile=profile, counters=counters)
        self.plan = plan
        members = plan.pool_members()
        assigned = set(plan.assignment)
        missing = [name for name in self.simulators if name not in assigned]
        if missing:
            raise SimulationError(f"pool plan misses atomic {missing[0]!r}"
                                  + (f" (+{len(missing) - 1} more)" if len(missing) > 1 else ""))
        unknown = sorted(assigned - set(self.simulators))
        if unknown:
            raise SimulationError(f"pool plan assigns unknown atomic {unknown[0]!r}")
        self.lambda_tasks: dict[str, list[PhaseTask]] = {}
        self.delta_tasks: dict[str, list[PhaseTask]] = {}
        for pool in plan.pools:
            sims = [self.simulators[name] for name in members[pool.name]]
            self.lambda_tasks[pool.name] = [PhaseTask(pool.name, "lambda", s) for s in sims]
            self.delta_tasks[pool.name] = [PhaseTask(pool.name, "delta", s) for s in sims]
        self._executors = {pool.name: ThreadPoolExecutor(
            max_workers=pool.workers, thread_name_prefix=f"pool-{pool.name}")
            for pool in plan.pools}
        self.task_log: list[TaskLogEntry] | None = [] if log_tasks else None
        self._log_lock = threading.Lock()

    # -- lifecycle ------------------------------------------------------------

    def close(self) -> None:
        for executor in self._executors.values():
            executor.shutdown(wait=True)

    def __enter__(self) -> "ParallelCoordinator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- phase execution ---------------------------------------------------------

    def _run_task(self, task: PhaseTask) -> None:
        started = time.perf_counter()
        t = self.clock.t
        if task.phase == "lambda":
            task.simulator.run_lambda(t)
        else:
            task.simulator.run_delta(t)
        if self.task_log is not None:
            entry = TaskLogEntry(self.clock.iteration, task.pool, task.phase,
                                 task.simulator.name, started, time.perf_counter())
            with self._log_lock:
                self.task_log.append(entry)

    def run_phase(self, phase: str) -> None:
        """Run one phase: each pool's tasks complete, concurrently within
        the pool, before the next pool starts."""
        tasks_by_pool = self.lambda_tasks if phase == "lambda" else self.delta_tasks
        for pool in self.plan.pools:
            tasks = tasks_by_pool[pool.name]
            if not tasks:
                continue
            futures = [self._executors[pool.name].submit(self._run_task, task)
                       for task in tasks]
            for future in futures:
                future.result()

    def run_lambda(self) -> None:
        self.run_phase("lambda")
        self._propagate()

    def run_deltfcn(self) -> None:
        self.run_phase("delta")

    def workers_pools_label(self) -> str:
        return self.plan.label()

"""Master-worker task execution with deterministic partitioning.

Work is expressed as a contiguous range of *items* (boundary points,
training points, path blocks). A :class:`TaskPlan` splits the range into
balanced contiguous tasks; :func:`run` executes them on a worker pool
and returns the per-task reports **in task order**, so merged results
never depend on scheduling. Randomness is keyed per item, not per task
(see :mod:`bermuda.rng`), which makes the merged output identical for
any worker count, task count, or pool kind.

Two pools are supported. ``process`` (the default) forks one worker per
slot, which scales on hosts -- sandboxed kernels in particular -- where
CPU-bound threads of a single process are serialized by the scheduler;
task functions must then be picklable (module-level functions or
partials of them). ``thread`` keeps everything in-process and suits
workloads dominated by GIL-releasing kernels on ordinary kernels.

Workers receive immutable inputs and return owned outputs; only the
coordinator merges.
"""

from __future__ import annotations

import multiprocessing
import time
import warnings
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

__all__ = ["TaskPlan", "WorkerReport", "TimingLog", "EngineTaskError",
           "partition", "run", "Engine"]


class EngineTaskError(RuntimeError):
    """A task failed; the run is aborted."""

    def __init__(self, task_id: int, cause: BaseException):
        super().__init__(f"task {task_id} failed: {cause!r}")
        self.task_id = task_id


@dataclass(frozen=True)
class TaskPlan:
    """Balanced contiguous partition of [0, total_items)."""

    total_items: int
    nb_tasks: int
    ranges: tuple[tuple[int, int], ...]
    phase: str = ""


@dataclass(frozen=True)
class WorkerReport:
    """One task's outcome: identity, wall time, opaque payload."""

    task_id: int
    seconds: float
    n_items: int
    payload: Any


def partition(total: int, nb: int, phase: str = "") -> TaskPlan:
    """Split ``total`` items into ``nb`` contiguous ranges, sizes within 1."""
    if total < 1:
        raise ValueError(f"need at least one item, got {total}")
    if nb < 1:
        raise ValueError(f"need at least one task, got {nb}")
    if nb > total:
        warnings.warn(f"nb_tasks={nb} exceeds {total} items; clamping", stacklevel=2)
        nb = total
    base, extra = divmod(total, nb)
    ranges = []
    start = 0
    for i in range(nb):
        size = base + (1 if i < extra else 0)
        ranges.append((start, start + size))
        start += size
    return TaskPlan(total_items=total, nb_tasks=nb, ranges=tuple(ranges), phase=phase)


def _timed_task(task_fn: Callable[[int, int, int], Any], task_id: int,
                start: int, end: int) -> WorkerReport:
    t0 = time.perf_counter()
    payload = task_fn(task_id, start, end)
    return WorkerReport(task_id, time.perf_counter() - t0, end - start, payload)


def run(plan: TaskPlan, task_fn: Callable[[int, int, int], Any],
        worker_count: int, pool: str = "process") -> list[WorkerReport]:
    """Execute ``task_fn(task_id, start, end)`` for every range of the plan.

    Up to ``worker_count`` tasks run concurrently; reports come back in
    task-id order regardless of completion order. The first failing task
    (by id) aborts the run. With ``pool="process"``, ``task_fn`` must be
    picklable.
    """
    if worker_count < 1:
        raise ValueError(f"need at least one worker, got {worker_count}")
    if pool not in ("process", "thread"):
        raise ValueError(f"unknown pool kind {pool!r}")

    if worker_count == 1:
        return [_timed_task(task_fn, i, s, e) for i, (s, e) in enumerate(plan.ranges)]

    if pool == "thread":
        executor = ThreadPoolExecutor(max_workers=worker_count)
    else:
        executor = ProcessPoolExecutor(
            max_workers=min(worker_count, plan.nb_tasks),
            mp_context=multiprocessing.get_context("fork"))
    with executor:
        futures = [executor.submit(_timed_task, task_fn, i, s, e)
                   for i, (s, e) in enumerate(plan.ranges)]
        reports = []
        for i, fut in enumerate(futures):
            try:
                reports.append(fut.result())
            except Exception as exc:
                raise EngineTaskError(i, exc) from exc
    return reports


@dataclass
class TimingLog:
    """Per-task durations, sufficient to reconstruct speedup/straggler plots."""

    rows: list[tuple[str, int, float]] = field(default_factory=list)

    def record(self, phase: str, reports: list[WorkerReport]) -> None:
        self.rows.extend((phase, r.task_id, r.seconds) for r in reports)

    def phase_seconds(self, phase: str) -> float:
        return sum(s for p, _, s in self.rows if p == phase)

    def straggler_ratio(self, phase: str) -> float:
        """max/median of task durations in a phase (1.0 if degenerate)."""
        times = [s for p, _, s in self.rows if p == phase]
        if not times:
            return 1.0
        med = float(np.median(times))
        return float(max(times) / med) if med > 0.0 else 1.0


@dataclass
class Engine:
    """Execution context: worker pool size, kind, and task decomposition.

    ``nb_tasks`` defaults to the worker count. Results are independent
    of all three settings; they only shape the schedule.
    """

    workers: int = 1
    nb_tasks: int | None = None
    pool: str = "process"
    timing: TimingLog = field(default_factory=TimingLog)

    def plan(self, total: int, phase: str = "") -> TaskPlan:
        nb = self.nb_tasks if self.nb_tasks is not None else self.workers
        return partition(total, nb, phase)

    def run_ranges(self, total: int, task_fn: Callable[[int, int, int], Any],
                   phase: str = "") -> list[WorkerReport]:
        reports = run(self.plan(total, phase), task_fn, self.workers, self.pool)
        self.timing.record(phase, reports)
        return reports

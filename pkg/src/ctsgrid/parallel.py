"""Deterministic process-pool execution and scaling measurement.

Tasks are dispatched to a pool of worker processes; each worker receives the
shared read-only context once (through the pool initializer) and results are
written back into slots indexed by task position, so output order never
depends on scheduling. With ``workers == 1`` everything runs inline through
the same wrapper, which makes the sequential run the reference result.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence


@dataclass(frozen=True)
class TaskFailure:
    """Placeholder stored in the result slot of a task that raised."""

    index: int
    error: str


_FUNC: Callable | None = None
_SHARED: Any = None


def _init_worker(func: Callable, shared: Any) -> None:
    global _FUNC, _SHARED
    _FUNC, _SHARED = func, shared


def _run_one(item: tuple[int, Any]):
    index, task = item
    try:
        return _FUNC(task, _SHARED)
    except Exception as exc:  # noqa: BLE001 - failures are data
        return TaskFailure(index, f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}")


def run_parallel(
    func: Callable[[Any, Any], Any],
    tasks: Iterable[Any],
    workers: int = 1,
    shared: Any = None,
    chunksize: int | None = None,
) -> list:
    """Evaluate ``func(task, shared)`` for every task; results keep task order.

    ``func`` must be a module-level (picklable) callable and must not mutate
    ``shared``. A task that raises yields a :class:`TaskFailure` in its slot.
    """
    global _FUNC, _SHARED
    if workers < 1:
        raise ValueError("workers must be >= 1")
    items = list(enumerate(tasks))
    if workers == 1 or len(items) <= 1:
        saved = (_FUNC, _SHARED)
        _init_worker(func, shared)
        try:
            return [_run_one(item) for item in items]
        finally:
            _FUNC, _SHARED = saved
    nproc = min(workers, len(items))
    if chunksize is None:
        # small chunks keep the load balanced; 4 chunks per worker
        chunksize = max(1, math.ceil(len(items) / (nproc * 4)))
    results: list = [None] * len(items)
    with ProcessPoolExecutor(
        max_workers=nproc, initializer=_init_worker, initargs=(func, shared)
    ) as pool:
        for (index, _), value in zip(items, pool.map(_run_one, items, chunksize=chunksize)):
            results[index] = value
    return results


def available_cpus() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


# -- scaling -------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingRow:
    workers: int
    wall_seconds: float
    speedup: float
    efficiency: float


@dataclass(frozen=True)
class ScalingReport:
    """Wall times per worker count.

    ``speedup = T1 / Tp`` and ``efficiency = T1 / (p * Tp)`` (the standard
    parallel-efficiency definition).
    """

    phase: str
    rows: tuple[ScalingRow, ...]

    @classmethod
    def from_times(cls, phase: str, times: dict[int, float]) -> "ScalingReport":
        if 1 not in times:
            raise ValueError("a single-worker time is required as the reference")
        t1 = times[1]
        rows = []
        for p in sorted(times):
            tp = times[p]
            if p < 1 or not tp > 0:
                raise ValueError("worker counts must be >= 1 and wall times positive")
            rows.append(ScalingRow(p, tp, t1 / tp, t1 / (p * tp)))
        return cls(phase, tuple(rows))

    def row(self, workers: int) -> ScalingRow:
        return next(r for r in self.rows if r.workers == workers)

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(SCALING_FIELDS)
        for r in self.rows:
            w.writerow([r.workers, self.phase, f"{r.wall_seconds:.4f}",
                        f"{r.speedup:.4f}", f"{r.efficiency:.4f}"])
        return buf.getvalue()


SCALING_FIELDS = ("workers", "phase", "wall_s", "speedup", "efficiency")


def scaling_study(
    workload: Callable[[int], Any],
    worker_counts: Sequence[int],
    phase: str = "rtca",
    repeats: int = 1,
) -> ScalingReport:
    """Time ``workload(workers)`` for each worker count (best of ``repeats``).

    A single-worker run is always measured as the reference even when 1 is not
    among ``worker_counts``; it is then omitted from the report rows.
    """
    counts = sorted(set(worker_counts) | {1})
    times: dict[int, float] = {}
    for p in counts:
        best = math.inf
        for _ in range(max(repeats, 1)):
            t0 = time.perf_counter()
            workload(p)
            best = min(best, time.perf_counter() - t0)
        times[p] = best
    report = ScalingReport.from_times(phase, times)
    if 1 not in worker_counts:
        report = ScalingReport(phase, tuple(r for r in report.rows if r.workers != 1))
    return report

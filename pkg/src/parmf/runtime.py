"""
Bulk-synchronous execution substrate for the solvers.

Work is split into contiguous index blocks (:class:`Partition`), one per
worker.  A :class:`Stage` runs a kernel over every block in parallel and
returns only when all blocks are done, which is the barrier between solver
phases.  Kernels are numba functions compiled with ``nogil=True``, so
Python threads give real parallelism.

Stages also carry the buffers they consume and produce.  Execution is on
the host, so nothing is copied; the byte counts are recorded so reports can
show how much data each phase would move to and from a device.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import MeasurementError, ParameterError

_log = logging.getLogger(__name__)

Kernel = Callable[[int, int], None]


@dataclass(frozen=True, eq=False)
class Partition:
    """
    Contiguous split of ``count`` indices over ``p`` workers.

    Worker ``r`` owns ``range(bounds[r], bounds[r + 1])``.
    """

    bounds: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.bounds, other.bounds)

    def __hash__(self):
        return hash(tuple(self.bounds.tolist()))

    @property
    def p(self) -> int:
        return len(self.bounds) - 1

    @property
    def count(self) -> int:
        return int(self.bounds[-1])

    def block(self, r: int) -> range:
        return range(int(self.bounds[r]), int(self.bounds[r + 1]))

    def blocks(self) -> list[range]:
        return [self.block(r) for r in range(self.p)]

    def sets(self) -> list[np.ndarray]:
        """Per-worker index lists S_1..S_p."""
        return [np.arange(b.start, b.stop) for b in self.blocks()]

    def sizes(self) -> np.ndarray:
        return np.diff(self.bounds)

    @property
    def assignment(self) -> np.ndarray:
        """Worker id of every index."""
        return np.repeat(np.arange(self.p), self.sizes())

    def worker_costs(self, costs) -> np.ndarray:
        c = np.concatenate([[0], np.cumsum(np.asarray(costs, dtype=np.int64))])
        return c[self.bounds[1:]] - c[self.bounds[:-1]]

    def bottleneck(self, costs) -> int:
        return int(self.worker_costs(costs).max(initial=0))


def partition_uniform(count: int, p: int) -> Partition:
    """Blocks of ``ceil(count/p)`` then ``floor(count/p)`` indices."""
    if p < 1:
        raise ParameterError(f"worker count must be >= 1, got {p}")
    if count < 0:
        raise ParameterError(f"count must be >= 0, got {count}")
    base, extra = divmod(count, p)
    sizes = np.full(p, base, dtype=np.int64)
    sizes[:extra] += 1
    return Partition(np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64))


def work_model(offsets) -> np.ndarray:
    """Per-index cost ``4 * |Omega_i|`` from CSR/CSC offsets."""
    return 4 * np.diff(np.asarray(offsets, dtype=np.int64))


def _fits(prefix: np.ndarray, bound: int, p: int) -> bool:
    # greedy: each block extends as far as the bound allows
    start, used, n = 0, 0, len(prefix) - 1
    while start < n:
        if used == p:
            return False
        end = int(np.searchsorted(prefix, prefix[start] + bound, side="right")) - 1
        start = max(end, start + 1)
        used += 1
    return True


def partition_balanced(costs, p: int) -> Partition:
    """
    Contiguous partition minimizing the most expensive block.

    The optimal bottleneck is found by binary search with a greedy
    feasibility sweep.  Blocks are then cut so each worker takes roughly an
    equal share of the remaining cost, which keeps the split identical to
    :func:`partition_uniform` when all costs are equal.
    """
    if p < 1:
        raise ParameterError(f"worker count must be >= 1, got {p}")
    costs = np.asarray(costs, dtype=np.int64)
    if np.any(costs < 0):
        raise ParameterError("costs must be non-negative")
    n = len(costs)
    prefix = np.concatenate([[0], np.cumsum(costs)])
    total = int(prefix[-1])
    if n == 0 or total == 0 or np.all(costs == costs[0]):
        return partition_uniform(n, p)

    lo, hi = int(costs.max()), total
    while lo < hi:
        mid = (lo + hi) // 2
        if _fits(prefix, mid, p):
            hi = mid
        else:
            lo = mid + 1
    bound = lo

    bounds = [0]
    start = 0
    for r in range(p - 1):
        left = p - r
        remaining = int(prefix[n] - prefix[start])
        target = prefix[start] + -(-remaining // left)
        end = int(np.searchsorted(prefix, target, side="left"))
        limit = int(np.searchsorted(prefix, prefix[start] + bound, side="right")) - 1
        end = min(max(end, start), limit, n)
        if not _fits(prefix[end:] - prefix[end], bound, left - 1):
            end = min(limit, n)
        bounds.append(end)
        start = end
    bounds.append(n)
    return Partition(np.asarray(bounds, dtype=np.int64))


@dataclass
class Stage:
    """One bulk-synchronous step: a kernel over every block of a partition."""

    name: str
    kernel: Kernel
    partition: Partition
    transfer_in: Mapping[str, np.ndarray] = field(default_factory=dict)
    transfer_out: Mapping[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class StageTiming:
    name: str
    seconds: float
    workers: int
    bytes_in: int
    bytes_out: int


def _nbytes(bufs: Mapping[str, np.ndarray]) -> int:
    return int(sum(np.asarray(b).nbytes for b in bufs.values()))


def default_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


class Runtime:
    """
    A fixed pool of ``workers`` threads that executes stages.

    Use as a context manager, or call :meth:`close` when done.
    """

    def __init__(self, workers: int | None = None):
        if workers is None:
            workers = default_workers()
        if workers < 1:
            raise ParameterError(f"worker count must be >= 1, got {workers}")
        self.workers = workers
        self._pool = ThreadPoolExecutor(workers, thread_name_prefix="parmf") if workers > 1 else None
        self.timings: list[StageTiming] = []

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def partition_rows(self, offsets) -> Partition:
        return partition_balanced(work_model(offsets), self.workers)

    def run_stage(self, stage: Stage) -> StageTiming:
        """
        Run ``stage.kernel(start, stop)`` for each worker's block and wait for
        all of them.

        If kernels fail, the error from the lowest worker id is raised after
        every worker has finished.
        """
        blocks = stage.partition.blocks()
        t0 = time.perf_counter()
        if self._pool is None or len(blocks) == 1:
            errors = []
            for r, b in enumerate(blocks):
                try:
                    stage.kernel(b.start, b.stop)
                except BaseException as e:  # noqa: BLE001
                    errors.append((r, e))
        else:
            futures = [self._pool.submit(stage.kernel, b.start, b.stop) for b in blocks]
            errors = [(r, f.exception()) for r, f in enumerate(futures) if f.exception() is not None]
        elapsed = time.perf_counter() - t0
        if errors:
            r, err = min(errors, key=lambda x: x[0])
            _log.debug("stage %s failed on worker %d: %s", stage.name, r, err)
            raise err
        timing = StageTiming(
            stage.name, elapsed, stage.partition.p, _nbytes(stage.transfer_in), _nbytes(stage.transfer_out)
        )
        self.timings.append(timing)
        return timing

    def run_plan(self, plan: Sequence[Stage]) -> list[StageTiming]:
        return [self.run_stage(s) for s in plan]

    def record_transfer(self, name: str, inbound: Mapping[str, np.ndarray] = {}, outbound: Mapping[str, np.ndarray] = {}):
        """Log a host/device handoff that moves no computation."""
        self.timings.append(StageTiming(name, 0.0, self.workers, _nbytes(inbound), _nbytes(outbound)))

    def summary(self) -> dict[str, dict[str, float]]:
        """Aggregate timings by stage name."""
        out: dict[str, dict[str, float]] = {}
        for t in self.timings:
            s = out.setdefault(t.name, {"count": 0, "seconds": 0.0, "bytes_in": 0, "bytes_out": 0})
            s["count"] += 1
            s["seconds"] += t.seconds
            s["bytes_in"] += t.bytes_in
            s["bytes_out"] += t.bytes_out
        return out


def ordered_reduce(partials: Sequence[float]) -> float:
    """Sum per-worker partials in worker-id order."""
    total = 0.0
    for x in partials:
        total += x
    return total


def speedup(base, parallel) -> float:
    """
    Sequential time divided by parallel time.

    Accepts plain seconds or anything with a ``train_seconds`` attribute.
    """
    t_seq = float(getattr(base, "train_seconds", base))
    t_par = float(getattr(parallel, "train_seconds", parallel))
    if t_par <= 0 or not np.isfinite(t_par):
        raise MeasurementError(f"parallel time must be positive, got {t_par}")
    if t_seq < 0 or not np.isfinite(t_seq):
        raise MeasurementError(f"sequential time must be non-negative, got {t_seq}")
    return t_seq / t_par

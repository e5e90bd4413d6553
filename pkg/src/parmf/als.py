"""
Alternating least squares.

Each half-epoch solves, for every row of one factor matrix, the regularized
normal equations against the other (fixed) factor matrix:

    w_i = (H_i^T H_i + lambda I)^{-1} H_i^T a_i

where ``H_i`` holds the item vectors of the items user ``i`` rated.  The
Gram matrix is accumulated in ascending item order and factored with
Cholesky, so a row's result depends only on its own inputs and the output
is bit-identical for any worker count.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from functools import partial

import numpy as np
from numba import njit

from .dense import OK, _nb_cholesky, _nb_cholesky_solve, _nb_gram_accumulate, _nb_gram_finish, _nb_gram_zero
from .errors import DimensionError, NotPositiveDefiniteError, ParameterError
from .model import FactorModel, ProbeSet, init_als, objective, rmse
from .report import IterationRecord, TrainReport
from .runtime import Runtime, Stage
from .sparse import RatingsMatrix

_log = logging.getLogger(__name__)

PRECISIONS = {"single": np.float32, "double": np.float64}


@dataclass
class AlsConfig:
    k: int = 5
    lam: float = 0.1
    outer_iters: int = 15
    workers: int = 1
    precision: str = "double"
    seed: int | None = 0

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        if not self.lam > 0:
            raise ParameterError(f"ALS needs lambda > 0, got {self.lam}")
        if self.outer_iters < 1:
            raise ParameterError(f"outer_iters must be >= 1, got {self.outer_iters}")
        if self.workers < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers}")
        if self.precision not in PRECISIONS:
            raise ParameterError(f"precision must be one of {sorted(PRECISIONS)}, got {self.precision!r}")

    @property
    def dtype(self):
        return PRECISIONS[self.precision]


@njit(nogil=True, cache=True)
def _solve_rows(lo, hi, offsets, index, vals, other, out, lam):
    """Solve rows ``lo..hi`` of ``out``; returns -1 or the first failing row."""
    k = out.shape[1]
    g = np.empty((k, k), dtype=out.dtype)
    b = np.empty(k, dtype=out.dtype)
    for i in range(lo, hi):
        start = offsets[i]
        stop = offsets[i + 1]
        if start == stop:
            for t in range(k):
                out[i, t] = 0
            continue
        _nb_gram_zero(g)
        for t in range(k):
            b[t] = 0
        for e in range(start, stop):
            hj = other[index[e]]
            _nb_gram_accumulate(g, hj)
            a = vals[e]
            for t in range(k):
                b[t] += a * hj[t]
        _nb_gram_finish(g, lam)
        if _nb_cholesky(g) != OK:
            return i
        _nb_cholesky_solve(g, b)
        for t in range(k):
            out[i, t] = b[t]
    return -1


def _check_row_kernel(lo, hi, offsets, index, vals, other, out, lam):
    bad = _solve_rows(lo, hi, offsets, index, vals, other, out, lam)
    if bad >= 0:
        raise NotPositiveDefiniteError(f"normal equations of row {bad} are not positive definite")


def _row_vals(a: RatingsMatrix, dtype):
    return a.val_row if a.val_row.dtype == dtype else a.val_row.astype(dtype)


def _col_vals(a: RatingsMatrix, dtype):
    return a.val_col if a.val_col.dtype == dtype else a.val_col.astype(dtype)


def solve_user_row(i: int, h: np.ndarray, a: RatingsMatrix, lam: float, k: int | None = None) -> np.ndarray:
    """Optimal user vector ``w_i`` for fixed item factors ``h``."""
    if not 0 <= i < a.m:
        raise DimensionError(f"user {i} outside [0, {a.m})")
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    if h.shape[0] != a.n or (k is not None and h.shape[1] != k):
        raise DimensionError(f"item factors have shape {h.shape}, expected ({a.n}, {k})")
    out = np.zeros((a.m, h.shape[1]), dtype=h.dtype)
    _check_row_kernel(i, i + 1, a.row_start, a.col_of, _row_vals(a, h.dtype), h, out, h.dtype.type(lam))
    return out[i]


def solve_item_row(j: int, w: np.ndarray, a: RatingsMatrix, lam: float, k: int | None = None) -> np.ndarray:
    """Optimal item vector ``h_j`` for fixed user factors ``w``."""
    if not 0 <= j < a.n:
        raise DimensionError(f"item {j} outside [0, {a.n})")
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    if w.shape[0] != a.m or (k is not None and w.shape[1] != k):
        raise DimensionError(f"user factors have shape {w.shape}, expected ({a.m}, {k})")
    out = np.zeros((a.n, w.shape[1]), dtype=w.dtype)
    _check_row_kernel(j, j + 1, a.col_start, a.row_of, _col_vals(a, w.dtype), w, out, w.dtype.type(lam))
    return out[j]


class _AlsPhases:
    """Pre-built stages for one (model, matrix, runtime) triple."""

    def __init__(self, model: FactorModel, a: RatingsMatrix, lam: float, runtime: Runtime):
        model.check_matches(a)
        dtype = model.dtype
        lam = dtype.type(lam)
        rv, cv = _row_vals(a, dtype), _col_vals(a, dtype)
        self.user_stage = Stage(
            "als-w",
            partial(_check_row_kernel, offsets=a.row_start, index=a.col_of, vals=rv,
                    other=model.h, out=model.w, lam=lam),
            runtime.partition_rows(a.row_start),
            transfer_in={"h": model.h},
            transfer_out={"w": model.w},
        )
        self.item_stage = Stage(
            "als-h",
            partial(_check_row_kernel, offsets=a.col_start, index=a.row_of, vals=cv,
                    other=model.w, out=model.h, lam=lam),
            runtime.partition_rows(a.col_start),
            transfer_in={"w": model.w},
            transfer_out={"h": model.h},
        )
        self.runtime = runtime


def als_half_step(model: FactorModel, a: RatingsMatrix, lam: float, runtime: Runtime, side: str) -> FactorModel:
    """Re-solve every row of W (``side="w"``) or H (``side="h"``)."""
    phases = _AlsPhases(model, a, lam, runtime)
    if side == "w":
        runtime.run_stage(phases.user_stage)
    elif side == "h":
        runtime.run_stage(phases.item_stage)
    else:
        raise ParameterError(f"side must be 'w' or 'h', got {side!r}")
    return model


def als_epoch(model: FactorModel, a: RatingsMatrix, lam: float, runtime: Runtime) -> FactorModel:
    """All of W from the current H, barrier, then all of H from the new W."""
    phases = _AlsPhases(model, a, lam, runtime)
    runtime.run_stage(phases.user_stage)
    runtime.run_stage(phases.item_stage)
    return model


def als_train(config: AlsConfig, a: RatingsMatrix, probe: ProbeSet | None = None,
              runtime: Runtime | None = None) -> tuple[FactorModel, TrainReport]:
    """
    Train ALS for ``config.outer_iters`` epochs.

    Epoch wall time excludes the objective and RMSE evaluation that follow
    it.
    """
    if probe is not None:
        probe.check_bounds(a.m, a.n)
    own_runtime = runtime is None
    if own_runtime:
        runtime = Runtime(config.workers)
    try:
        model = init_als(FactorModel.zeros(a.m, a.n, config.k, config.dtype), config.seed)
        report = TrainReport("als", runtime.workers, config.precision)
        wall0 = time.perf_counter()
        runtime.record_transfer("copy-in", {"a_row": a.val_row, "a_col": a.val_col, "w": model.w, "h": model.h})
        phases = _AlsPhases(model, a, config.lam, runtime)
        for it in range(1, config.outer_iters + 1):
            t0 = time.perf_counter()
            runtime.run_stage(phases.user_stage)
            runtime.run_stage(phases.item_stage)
            secs = time.perf_counter() - t0
            obj = objective(model, a, config.lam)
            err = rmse(model, probe) if probe is not None and len(probe) else None
            report.add(IterationRecord(it, secs, obj, err))
            _log.info("als iteration %d: %.3fs objective %.6g rmse %s", it, secs, obj, err)
        runtime.record_transfer("copy-out", outbound={"w": model.w, "h": model.h})
        report.finish(time.perf_counter() - wall0, runtime.summary())
        return model, report
    finally:
        if own_runtime:
            runtime.close()

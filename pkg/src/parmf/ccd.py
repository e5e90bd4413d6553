"""
Cyclic coordinate descent for matrix factorization.

Two update schedules share one residual ``R = A - W H^T`` kept on the
observed entries:

* CCD sweeps users then items, and for each row updates one factor entry
  at a time (``w_it`` for t = 0..k-1), each time solving the 1-D problem
  exactly and patching the residual of that row.
* CCD++ works one feature ``t`` at a time.  It adds the current rank-one
  term back into the residual (``R^ = R + w_t h_t^T``), alternates exact
  updates of the rank-one pair ``(u, v)`` for ``inner_iters`` rounds, then
  stores ``(u, v)`` as the new columns and subtracts ``u v^T`` again.

Every residual write goes to both layouts of the residual (the CSR slot
and its cross-linked CSC slot), so row sweeps and column sweeps always see
the same values.  CCD++ phases run as stages over contiguous row or column
blocks; a row owns all of its entries in both layouts, so workers never
write the same slot, and each row's arithmetic is independent of the
partition.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np
from numba import njit

from .errors import DimensionError, ParameterError
from .model import FactorModel, ProbeSet, init_ccd, objective, rmse
from .report import IterationRecord, TrainReport
from .runtime import Partition, Runtime, Stage, partition_uniform
from .sparse import RatingsMatrix, ResidualMatrix, residual_from

_log = logging.getLogger(__name__)

PRECISIONS = {"single": np.float32, "double": np.float64}
VARIANTS = ("ccd", "ccdpp")


@dataclass
class CcdConfig:
    k: int = 5
    lam: float = 0.1
    outer_iters: int = 15
    inner_iters: int = 15
    workers: int = 1
    precision: str = "double"
    variant: str = "ccdpp"
    seed: int | None = 0

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        if self.lam < 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise ParameterError("outer_iters and inner_iters must be >= 1")
        if self.workers < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers}")
        if self.precision not in PRECISIONS:
            raise ParameterError(f"precision must be one of {sorted(PRECISIONS)}, got {self.precision!r}")
        if self.variant not in VARIANTS:
            raise ParameterError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def dtype(self):
        return PRECISIONS[self.precision]


# -- element-wise CCD kernels ------------------------------------------------


@njit(nogil=True, cache=True)
def _z_star(i, t, row_start, col_of, rv, w, h, lam):
    num = lam - lam
    den = lam
    wit = w[i, t]
    for e in range(row_start[i], row_start[i + 1]):
        hjt = h[col_of[e], t]
        num += (rv[e] + wit * hjt) * hjt
        den += hjt * hjt
    if den == 0:
        return num - num
    return num / den


@njit(nogil=True, cache=True)
def _apply_z(i, t, z, row_start, col_of, rv, cv, xlink, w, h):
    delta = z - w[i, t]
    for e in range(row_start[i], row_start[i + 1]):
        x = rv[e] - delta * h[col_of[e], t]
        rv[e] = x
        cv[xlink[e]] = x
    w[i, t] = z


@njit(nogil=True, cache=True)
def _ccd_sweep(offsets, index, own, mirror, link, this, other, lam):
    """One CCD pass over every row of ``this`` (W, or H with CSC arrays)."""
    k = this.shape[1]
    for i in range(len(offsets) - 1):
        for t in range(k):
            z = _z_star(i, t, offsets, index, own, this, other, lam)
            _apply_z(i, t, z, offsets, index, own, mirror, link, this, other)


# -- CCD++ kernels ------------------------------------------------------------


@njit(nogil=True, cache=True)
def _add_rank_one(lo, hi, row_start, col_of, rv, cv, xlink, u, v, sign):
    for i in range(lo, hi):
        ui = sign * u[i]
        for e in range(row_start[i], row_start[i + 1]):
            x = rv[e] + ui * v[col_of[e]]
            rv[e] = x
            cv[xlink[e]] = x


@njit(nogil=True, cache=True)
def _rank_one_solve(lo, hi, offsets, index, vals, out, other, lam):
    for i in range(lo, hi):
        num = lam - lam
        den = lam
        for e in range(offsets[i], offsets[i + 1]):
            x = other[index[e]]
            num += vals[e] * x
            den += x * x
        if den == 0:
            out[i] = 0
        else:
            out[i] = num / den


@njit(nogil=True, cache=True)
def _store_column(lo, hi, src, dst, t):
    for i in range(lo, hi):
        dst[i, t] = src[i]


@njit(nogil=True, cache=True)
def _subtract_and_store(lo, hi, row_start, col_of, rv, cv, xlink, u, v, w, t):
    for i in range(lo, hi):
        ui = u[i]
        w[i, t] = ui
        for e in range(row_start[i], row_start[i + 1]):
            x = rv[e] - ui * v[col_of[e]]
            rv[e] = x
            cv[xlink[e]] = x


# -- public element-wise operations -------------------------------------------


def _scalar(r: ResidualMatrix, lam):
    return r.dtype.type(lam)


def ccd_z_star(i: int, t: int, r: ResidualMatrix, w: np.ndarray, h: np.ndarray, lam: float) -> float:
    """Minimizer of the 1-D problem in ``w[i, t]`` with everything else fixed."""
    if not 0 <= i < r.m:
        raise DimensionError(f"user {i} outside [0, {r.m})")
    b = r.base
    return float(_z_star(i, t, b.row_start, b.col_of, r.val_row, w, h, _scalar(r, lam)))


def ccd_apply_z(i: int, t: int, z_star: float, r: ResidualMatrix, w: np.ndarray, h: np.ndarray) -> None:
    """Set ``w[i, t] = z_star`` and patch row ``i`` of the residual."""
    if not 0 <= i < r.m:
        raise DimensionError(f"user {i} outside [0, {r.m})")
    b = r.base
    _apply_z(i, t, r.dtype.type(z_star), b.row_start, b.col_of, r.val_row, r.val_col, b.xlink, w, h)


def ccd_s_star(j: int, t: int, r: ResidualMatrix, w: np.ndarray, h: np.ndarray, lam: float) -> float:
    """Minimizer of the 1-D problem in ``h[j, t]`` with everything else fixed."""
    if not 0 <= j < r.n:
        raise DimensionError(f"item {j} outside [0, {r.n})")
    b = r.base
    return float(_z_star(j, t, b.col_start, b.row_of, r.val_col, h, w, _scalar(r, lam)))


def ccd_apply_s(j: int, t: int, s_star: float, r: ResidualMatrix, w: np.ndarray, h: np.ndarray) -> None:
    """Set ``h[j, t] = s_star`` and patch column ``j`` of the residual."""
    if not 0 <= j < r.n:
        raise DimensionError(f"item {j} outside [0, {r.n})")
    b = r.base
    _apply_z(j, t, r.dtype.type(s_star), b.col_start, b.row_of, r.val_col, r.val_row, b.xlink_col, h, w)


def ccd_epoch(model: FactorModel, r: ResidualMatrix, a: RatingsMatrix, config: CcdConfig) -> None:
    """One sweep over all users (every feature), then over all items."""
    model.check_matches(a)
    b = r.base
    lam = _scalar(r, config.lam)
    _ccd_sweep(b.row_start, b.col_of, r.val_row, r.val_col, b.xlink, model.w, model.h, lam)
    _ccd_sweep(b.col_start, b.row_of, r.val_col, r.val_row, b.xlink_col, model.h, model.w, lam)


# -- public CCD++ phases ------------------------------------------------------


def _run(runtime: Runtime | None, name, kernel, partition: Partition, tin=None, tout=None):
    stage = Stage(name, kernel, partition, tin or {}, tout or {})
    if runtime is None:
        for blk in partition.blocks():
            kernel(blk.start, blk.stop)
    else:
        runtime.run_stage(stage)


def _part(partition, runtime, count, offsets):
    if partition is not None:
        if partition.count != count:
            raise DimensionError(f"partition covers {partition.count} indices, expected {count}")
        return partition
    if runtime is not None:
        return runtime.partition_rows(offsets)
    return partition_uniform(count, 1)


def ccdpp_build_rhat(r: ResidualMatrix, wbar_t, hbar_t, partition: Partition | None = None,
                     runtime: Runtime | None = None) -> None:
    """In place: ``R <- R + wbar_t hbar_t^T`` on the observed entries."""
    b = r.base
    part = _part(partition, runtime, r.m, b.row_start)
    kern = partial(_add_rank_one, row_start=b.row_start, col_of=b.col_of, rv=r.val_row, cv=r.val_col,
                   xlink=b.xlink, u=wbar_t, v=hbar_t, sign=r.dtype.type(1))
    _run(runtime, "ccdpp-rhat", kern, part, {"u": wbar_t, "v": hbar_t})


def ccdpp_update_u(rhat: ResidualMatrix, u, v, lam: float, partition: Partition | None = None,
                   runtime: Runtime | None = None) -> None:
    """``u_i <- sum_j R^_ij v_j / (lam + sum_j v_j^2)`` over each user's items."""
    b = rhat.base
    part = _part(partition, runtime, rhat.m, b.row_start)
    kern = partial(_rank_one_solve, offsets=b.row_start, index=b.col_of, vals=rhat.val_row,
                   out=u, other=v, lam=_scalar(rhat, lam))
    _run(runtime, "ccdpp-u", kern, part)


def ccdpp_update_v(rhat: ResidualMatrix, u, v, lam: float, partition: Partition | None = None,
                   runtime: Runtime | None = None) -> None:
    """``v_j <- sum_i R^_ij u_i / (lam + sum_i u_i^2)`` over each item's users."""
    b = rhat.base
    part = _part(partition, runtime, rhat.n, b.col_start)
    kern = partial(_rank_one_solve, offsets=b.col_start, index=b.row_of, vals=rhat.val_col,
                   out=v, other=u, lam=_scalar(rhat, lam))
    _run(runtime, "ccdpp-v", kern, part)


def ccdpp_writeback(u, v, w: np.ndarray, h: np.ndarray, t: int, r: ResidualMatrix,
                    partition: Partition | None = None, col_partition: Partition | None = None,
                    runtime: Runtime | None = None) -> None:
    """
    Store ``(u, v)`` as column ``t`` of ``(w, h)`` and restore the true
    residual ``R <- R^ - u v^T``.
    """
    b = r.base
    part = _part(partition, runtime, r.m, b.row_start)
    cpart = _part(col_partition, runtime, r.n, b.col_start)
    kern = partial(_subtract_and_store, row_start=b.row_start, col_of=b.col_of, rv=r.val_row, cv=r.val_col,
                   xlink=b.xlink, u=u, v=v, w=w, t=t)
    _run(runtime, "ccdpp-writeback-r", kern, part, {"u": u, "v": v})
    _run(runtime, "ccdpp-writeback-h", partial(_store_column, src=v, dst=h, t=t), cpart)


Hook = Callable[[str, int, int, FactorModel, ResidualMatrix, np.ndarray, np.ndarray], None]


def ccdpp_outer_iteration(model: FactorModel, r: ResidualMatrix, config: CcdConfig, runtime: Runtime,
                          hook: Hook | None = None) -> None:
    """
    One pass over all k features.

    ``hook(phase, t, inner, model, r, u, v)`` is called after each phase
    (``"rhat"``, ``"u"``, ``"v"``, ``"writeback"``); between ``"rhat"`` and
    ``"writeback"`` the current column ``t`` is ``(u, v)``, not the
    stale column still stored in the model.
    """
    b = r.base
    rows = runtime.partition_rows(b.row_start)
    cols = runtime.partition_rows(b.col_start)
    for t in range(config.k):
        u = np.ascontiguousarray(model.w[:, t])
        v = np.ascontiguousarray(model.h[:, t])
        runtime.record_transfer("copy-uv-in", {"u": u, "v": v})
        ccdpp_build_rhat(r, u, v, rows, runtime)
        if hook:
            hook("rhat", t, 0, model, r, u, v)
        for inner in range(1, config.inner_iters + 1):
            ccdpp_update_u(r, u, v, config.lam, rows, runtime)
            if hook:
                hook("u", t, inner, model, r, u, v)
            ccdpp_update_v(r, u, v, config.lam, cols, runtime)
            if hook:
                hook("v", t, inner, model, r, u, v)
        runtime.record_transfer("copy-uv-out", outbound={"u": u, "v": v})
        ccdpp_writeback(u, v, model.w, model.h, t, r, rows, cols, runtime)
        if hook:
            hook("writeback", t, config.inner_iters, model, r, u, v)


def _train(config: CcdConfig, a: RatingsMatrix, probe: ProbeSet | None, runtime: Runtime | None,
           step, variant: str, residual_out: list | None = None):
    if probe is not None:
        probe.check_bounds(a.m, a.n)
    own_runtime = runtime is None
    if own_runtime:
        runtime = Runtime(config.workers)
    try:
        model = init_ccd(FactorModel.zeros(a.m, a.n, config.k, config.dtype), config.seed)
        r = residual_from(a, config.dtype)
        report = TrainReport(variant, runtime.workers, config.precision)
        wall0 = time.perf_counter()
        runtime.record_transfer("copy-in", {"a_row": a.val_row, "a_col": a.val_col, "r_row": r.val_row,
                                            "r_col": r.val_col})
        for it in range(1, config.outer_iters + 1):
            t0 = time.perf_counter()
            step(model, r, runtime)
            secs = time.perf_counter() - t0
            obj = objective(model, a, config.lam)
            err = rmse(model, probe) if probe is not None and len(probe) else None
            report.add(IterationRecord(it, secs, obj, err))
            _log.info("%s iteration %d: %.3fs objective %.6g rmse %s", variant, it, secs, obj, err)
        runtime.record_transfer("copy-out", outbound={"w": model.w, "h": model.h})
        report.finish(time.perf_counter() - wall0, runtime.summary())
        if residual_out is not None:
            residual_out.append(r)
        return model, report
    finally:
        if own_runtime:
            runtime.close()


def ccdpp_train(config: CcdConfig, a: RatingsMatrix, probe: ProbeSet | None = None,
                runtime: Runtime | None = None, hook: Hook | None = None,
                residual_out: list | None = None) -> tuple[FactorModel, TrainReport]:
    """
    Train with feature-wise CCD++ for ``config.outer_iters`` outer passes.

    ``residual_out``, if given, receives the final residual matrix.
    """
    return _train(config, a, probe, runtime,
                  lambda model, r, rt: ccdpp_outer_iteration(model, r, config, rt, hook),
                  "ccdpp", residual_out)


def ccd_train(config: CcdConfig, a: RatingsMatrix, probe: ProbeSet | None = None,
              runtime: Runtime | None = None, residual_out: list | None = None) -> tuple[FactorModel, TrainReport]:
    """
    Train with element-wise CCD.  Always sequential; ``config.workers`` only
    labels the report.
    """
    return _train(config, a, probe, runtime or Runtime(1),
                  lambda model, r, rt: ccd_epoch(model, r, a, config),
                  "ccd", residual_out)


def train(config: CcdConfig, a: RatingsMatrix, probe: ProbeSet | None = None, runtime: Runtime | None = None):
    """Dispatch on ``config.variant``."""
    if config.variant == "ccd":
        return ccd_train(config, a, probe, runtime)
    return ccdpp_train(config, a, probe, runtime)

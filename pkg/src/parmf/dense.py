"""
Small dense k x k kernels for the ALS normal equations.

The ``_nb_*`` functions are numba cores that write into caller-owned
buffers and report failure through a status code, so they can be called
from inside the nogil ALS row kernels.  The public wrappers validate their
arguments and turn status codes into exceptions.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import DimensionError, NotPositiveDefiniteError, ParameterError, SingularMatrixError

OK = 0
NOT_POSITIVE_DEFINITE = 1
SINGULAR = 2


@njit(nogil=True, cache=True)
def _nb_gram_zero(g):
    k = g.shape[0]
    for a in range(k):
        for b in range(k):
            g[a, b] = 0


@njit(nogil=True, cache=True)
def _nb_gram_accumulate(g, h):
    # upper triangle only; _nb_gram_finish mirrors it
    k = g.shape[0]
    for a in range(k):
        ha = h[a]
        for b in range(a, k):
            g[a, b] += ha * h[b]


@njit(nogil=True, cache=True)
def _nb_gram_finish(g, lam):
    k = g.shape[0]
    for a in range(k):
        g[a, a] += lam
        for b in range(a + 1, k):
            g[b, a] = g[a, b]


@njit(nogil=True, cache=True)
def _nb_cholesky(g):
    """In-place lower Cholesky factor of ``g``; zeroes the strict upper part."""
    k = g.shape[0]
    for j in range(k):
        d = g[j, j]
        for p in range(j):
            d -= g[j, p] * g[j, p]
        if not d > 0:
            return NOT_POSITIVE_DEFINITE
        d = np.sqrt(d)
        g[j, j] = d
        for i in range(j + 1, k):
            s = g[i, j]
            for p in range(j):
                s -= g[i, p] * g[j, p]
            g[i, j] = s / d
    for i in range(k):
        for j in range(i + 1, k):
            g[i, j] = 0
    return OK


@njit(nogil=True, cache=True)
def _nb_cholesky_solve(l, x):
    """Overwrite ``x`` with the solution of L L^T x = x."""
    k = l.shape[0]
    for i in range(k):
        if l[i, i] == 0:
            return SINGULAR
    for i in range(k):
        s = x[i]
        for p in range(i):
            s -= l[i, p] * x[p]
        x[i] = s / l[i, i]
    for i in range(k - 1, -1, -1):
        s = x[i]
        for p in range(i + 1, k):
            s -= l[p, i] * x[p]
        x[i] = s / l[i, i]
    return OK


def _as_float(a, dtype=None):
    a = np.asarray(a)
    if dtype is None:
        dtype = a.dtype if a.dtype in (np.float32, np.float64) else np.float64
    return np.array(a, dtype=dtype)


def gram_plus_ridge(rows, lam: float, k: int, dtype=np.float64) -> np.ndarray:
    """
    Compute ``sum_j h_j h_j^T + lam * I`` over the given rows.

    Rows are accumulated in the order given, and the result is exactly
    symmetric.
    """
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    rows = np.asarray(rows, dtype=dtype).reshape(-1, k) if len(rows) else np.zeros((0, k), dtype)
    g = np.empty((k, k), dtype=dtype)
    _nb_gram_zero(g)
    for h in rows:
        _nb_gram_accumulate(g, np.ascontiguousarray(h))
    _nb_gram_finish(g, g.dtype.type(lam))
    return g


def cholesky_factor(m) -> np.ndarray:
    """
    Lower-triangular ``L`` with ``L @ L.T == m``.

    Raises
    ------
    NotPositiveDefiniteError
        If a pivot is not strictly positive.
    """
    g = _as_float(m)
    if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 1:
        raise DimensionError(f"expected a non-empty square matrix, got shape {g.shape}")
    status = _nb_cholesky(g)
    if status != OK:
        raise NotPositiveDefiniteError("matrix is not positive definite")
    return g


def cholesky_solve(l, b) -> np.ndarray:
    """Solve ``L L^T x = b`` by forward then back substitution."""
    l = _as_float(l)
    x = _as_float(b, l.dtype)
    if l.ndim != 2 or l.shape[0] != l.shape[1] or x.shape != (l.shape[0],):
        raise DimensionError(f"shape mismatch: L {l.shape}, b {x.shape}")
    if _nb_cholesky_solve(l, x) != OK:
        raise SingularMatrixError("Cholesky factor has a zero diagonal entry")
    return x

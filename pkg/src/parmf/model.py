"""Latent factor model: storage, initialization, prediction and evaluation."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .errors import DataFormatError, DimensionError, EvaluationError, ParameterError
from .sparse import RatingsMatrix, Triplet

_MAGIC = b"PMFMODEL"
_HEADER = struct.Struct("<8sB7xQQQ")


@dataclass
class FactorModel:
    """
    User factors ``w`` (m x k) and item factors ``h`` (n x k).

    Row ``i`` of ``w`` is the user vector, row ``j`` of ``h`` the item
    vector; the predicted rating is their dot product.
    """

    w: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        if self.w.ndim != 2 or self.h.ndim != 2 or self.w.shape[1] != self.h.shape[1]:
            raise DimensionError(f"incompatible factor shapes {self.w.shape} and {self.h.shape}")
        if self.w.dtype != self.h.dtype:
            raise ParameterError("w and h must share a dtype")

    @classmethod
    def zeros(cls, m: int, n: int, k: int, dtype=np.float64) -> FactorModel:
        if k < 1:
            raise ParameterError(f"k must be >= 1, got {k}")
        return cls(np.zeros((m, k), dtype=dtype), np.zeros((n, k), dtype=dtype))

    @property
    def m(self) -> int:
        return self.w.shape[0]

    @property
    def n(self) -> int:
        return self.h.shape[0]

    @property
    def k(self) -> int:
        return self.w.shape[1]

    @property
    def dtype(self):
        return self.w.dtype

    def copy(self) -> FactorModel:
        return FactorModel(self.w.copy(), self.h.copy())

    def check_matches(self, a: RatingsMatrix):
        if (self.m, self.n) != a.shape:
            raise DimensionError(f"model is {self.m}x{self.n} but ratings are {a.m}x{a.n}")


def init_als(model: FactorModel, seed=None) -> FactorModel:
    """
    Zero ``w`` and fill ``h`` with i.i.d. uniform draws from (0, 1/sqrt(k)].
    """
    rng = np.random.default_rng(seed)
    draws = 1.0 - rng.random(model.h.shape)
    model.h[...] = draws / math.sqrt(model.k)
    model.w[...] = 0
    return model


def init_ccd(model: FactorModel, seed=None) -> FactorModel:
    """
    Zero ``w`` (so the residual equals the ratings).

    With ``seed=None`` ``h`` is zeroed too.  That start is a fixed point of
    every coordinate update (all optimal steps are 0), so the trainers pass a
    seed and ``h`` gets the same random start as :func:`init_als`.
    """
    if seed is None:
        model.w[...] = 0
        model.h[...] = 0
        return model
    return init_als(model, seed)


def predict(model: FactorModel, i: int, j: int) -> float:
    if not 0 <= i < model.m:
        raise DimensionError(f"user {i} outside [0, {model.m})")
    if not 0 <= j < model.n:
        raise DimensionError(f"item {j} outside [0, {model.n})")
    return float(np.dot(model.w[i], model.h[j]))


@njit(nogil=True, cache=True)
def _sq_errors(row_start, col_of, vals, w, h, out):
    m, k = w.shape
    for i in range(m):
        for e in range(row_start[i], row_start[i + 1]):
            j = col_of[e]
            p = 0.0
            for t in range(k):
                p += np.float64(w[i, t]) * np.float64(h[j, t])
            d = np.float64(vals[e]) - p
            out[e] = d * d


@njit(nogil=True, cache=True)
def _pair_sq_errors(users, items, ratings, w, h, out):
    k = w.shape[1]
    for e in range(len(users)):
        i = users[e]
        j = items[e]
        p = 0.0
        for t in range(k):
            p += np.float64(w[i, t]) * np.float64(h[j, t])
        d = np.float64(ratings[e]) - p
        out[e] = d * d


def _sum_squares(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    return math.fsum((x * x).tolist())


def frobenius_sq(model: FactorModel) -> float:
    """``||W||_F^2 + ||H||_F^2``, correctly rounded."""
    return math.fsum([_sum_squares(model.w), _sum_squares(model.h)])


def squared_error(model: FactorModel, a: RatingsMatrix) -> float:
    """Sum of squared errors over the observed entries of ``a``."""
    model.check_matches(a)
    out = np.empty(a.nnz, dtype=np.float64)
    _sq_errors(a.row_start, a.col_of, a.val_row, model.w, model.h, out)
    return math.fsum(out.tolist())


def objective(model: FactorModel, a: RatingsMatrix, lam: float) -> float:
    """
    Regularized squared loss

    .. math::
        \\sum_{(i,j) \\in \\Omega} (A_{ij} - w_i \\cdot h_j)^2
        + \\lambda (\\|W\\|_F^2 + \\|H\\|_F^2)

    Every term is evaluated in double precision and summed with
    :func:`math.fsum`, so the value does not depend on the order of users or
    items.
    """
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    return squared_error(model, a) + lam * frobenius_sq(model)


class ProbeSet:
    """Held-out ratings, stored as parallel arrays of dense indices."""

    def __init__(self, users, items, ratings):
        self.users = np.asarray(users, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)
        self.ratings = np.asarray(ratings, dtype=np.float64)
        if not (self.users.shape == self.items.shape == self.ratings.shape):
            raise DimensionError("probe arrays must have equal length")

    @classmethod
    def from_triplets(cls, triplets: Iterable[Triplet]) -> ProbeSet:
        t = list(triplets)
        return cls([x[0] for x in t], [x[1] for x in t], [x[2] for x in t])

    def __len__(self):
        return len(self.users)

    def check_bounds(self, m: int, n: int):
        if len(self) == 0:
            return
        if self.users.min() < 0 or self.users.max() >= m:
            raise DimensionError(f"probe user index outside [0, {m})")
        if self.items.min() < 0 or self.items.max() >= n:
            raise DimensionError(f"probe item index outside [0, {n})")


def rmse(model: FactorModel, probe: ProbeSet) -> float:
    """Root mean squared error of raw (unclamped) predictions on ``probe``."""
    if len(probe) == 0:
        raise EvaluationError("cannot compute RMSE of an empty probe set")
    probe.check_bounds(model.m, model.n)
    out = np.empty(len(probe), dtype=np.float64)
    _pair_sq_errors(probe.users, probe.items, probe.ratings, model.w, model.h, out)
    return math.sqrt(math.fsum(out.tolist()) / len(probe))


def top_n(model: FactorModel, i: int, count: int, exclude: Iterable = ()) -> list[tuple[int, float]]:
    """
    Highest-scoring items for user ``i``.

    ``exclude`` may hold item indices or the ``(item, position)`` pairs
    returned by :func:`~parmf.sparse.row_slice`.  Ties go to the lower item
    index.
    """
    if not 0 <= i < model.m:
        raise DimensionError(f"user {i} outside [0, {model.m})")
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    scores = model.h.astype(np.float64) @ model.w[i].astype(np.float64)
    keep = np.ones(model.n, dtype=bool)
    for x in exclude:
        keep[x[0] if isinstance(x, tuple) else int(x)] = False
    items = np.flatnonzero(keep)
    order = np.lexsort((items, -scores[items]))[:count]
    return [(int(items[o]), float(scores[items[o]])) for o in order]


def save_model(path, model: FactorModel) -> None:
    """Write ``m, n, k`` then ``W`` and ``H`` (row-major, little-endian)."""
    dtype = np.dtype(model.dtype).newbyteorder("<")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, dtype.itemsize, model.m, model.n, model.k))
        f.write(np.ascontiguousarray(model.w, dtype=dtype).tobytes())
        f.write(np.ascontiguousarray(model.h, dtype=dtype).tobytes())


def load_model(path) -> FactorModel:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DataFormatError("truncated model header", path)
    magic, size, m, n, k = _HEADER.unpack_from(data)
    if magic != _MAGIC or size not in (4, 8):
        raise DataFormatError("not a parmf model file", path)
    dtype = np.dtype("<f8" if size == 8 else "<f4")
    expect = _HEADER.size + (m + n) * k * size
    if len(data) != expect:
        raise DataFormatError(f"model file has {len(data)} bytes, expected {expect}", path)
    flat = np.frombuffer(data, dtype=dtype, offset=_HEADER.size)
    w = flat[: m * k].reshape(m, k).astype(dtype.newbyteorder("="))
    h = flat[m * k:].reshape(n, k).astype(dtype.newbyteorder("="))
    return FactorModel(w, h)


def global_mean_rmse(train_ratings: Sequence[float], probe: ProbeSet) -> float:
    """RMSE of predicting the training mean for every probe rating."""
    if len(probe) == 0:
        raise EvaluationError("cannot compute RMSE of an empty probe set")
    mu = float(np.mean(train_ratings))
    d = probe.ratings - mu
    return math.sqrt(math.fsum((d * d).tolist()) / len(probe))

"""
Sparse ratings storage.

A :class:`RatingsMatrix` keeps every observed rating twice: once in a
row-major (CSR) layout, for sweeps over a user's items, and once in a
column-major (CSC) layout, for sweeps over an item's users.  The ``xlink``
table maps each row-layout entry to the position of the same (user, item)
pair in the column layout, and ``xlink_col`` is its inverse, so a write made
during either sweep can be mirrored into the other layout in O(1).

A :class:`ResidualMatrix` shares the structure of its parent and carries
its own mutable values in both layouts.
"""

from __future__ import annotations

from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import DimensionError, DuplicateEntryError, ParameterError

#: dtype of the offset arrays and the cross-link tables
OFFSET_DTYPE = np.int64
#: dtype of the user/item index arrays
INDEX_DTYPE = np.int32


class Triplet(NamedTuple):
    """One observed rating, with dense 0-based indices."""

    user: int
    item: int
    rating: float


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class RatingsMatrix:
    """
    Immutable m x n sparse rating matrix in dual CSR/CSC layout.

    Attributes
    ----------
    m, n : int
        Number of users (rows) and items (columns).
    row_start : ndarray, shape (m + 1,)
        CSR offsets.
    col_of : ndarray, shape (nnz,)
        Item index of each row-layout entry; strictly increasing within a row.
    val_row : ndarray, shape (nnz,)
        Rating of each row-layout entry.
    col_start : ndarray, shape (n + 1,)
        CSC offsets.
    row_of : ndarray, shape (nnz,)
        User index of each column-layout entry; strictly increasing within a
        column.
    val_col : ndarray, shape (nnz,)
        Rating of each column-layout entry.
    xlink : ndarray, shape (nnz,)
        ``xlink[e]`` is the column-layout position of row-layout entry ``e``.
    xlink_col : ndarray, shape (nnz,)
        Inverse of ``xlink``.
    """

    __slots__ = (
        "m",
        "n",
        "row_start",
        "col_of",
        "val_row",
        "col_start",
        "row_of",
        "val_col",
        "xlink",
        "xlink_col",
    )

    def __init__(self, m, n, row_start, col_of, val_row, col_start, row_of, val_col, xlink, xlink_col):
        self.m = int(m)
        self.n = int(n)
        self.row_start = _readonly(row_start)
        self.col_of = _readonly(col_of)
        self.val_row = _readonly(val_row)
        self.col_start = _readonly(col_start)
        self.row_of = _readonly(row_of)
        self.val_col = _readonly(val_col)
        self.xlink = _readonly(xlink)
        self.xlink_col = _readonly(xlink_col)

    @property
    def nnz(self) -> int:
        return len(self.col_of)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    def row_counts(self) -> np.ndarray:
        """|Omega_i| for every user."""
        return np.diff(self.row_start)

    def col_counts(self) -> np.ndarray:
        """|Omega-bar_j| for every item."""
        return np.diff(self.col_start)

    def users_of_entries(self) -> np.ndarray:
        """User index of every row-layout entry."""
        return np.repeat(np.arange(self.m, dtype=INDEX_DTYPE), self.row_counts())

    def triplets(self) -> Iterator[Triplet]:
        """Enumerate entries in row-major order."""
        users = self.users_of_entries()
        for e in range(self.nnz):
            yield Triplet(int(users[e]), int(self.col_of[e]), float(self.val_row[e]))

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(users, items, ratings)`` in row-major order."""
        return self.users_of_entries(), np.array(self.col_of), np.array(self.val_row)

    def __repr__(self):
        return f"<RatingsMatrix {self.m}x{self.n}, nnz={self.nnz}>"


def from_triplets(triplets: Iterable[Triplet], m: int, n: int) -> RatingsMatrix:
    """
    Build a :class:`RatingsMatrix` from ``(user, item, rating)`` triplets.

    Triplet order does not matter.  Raises :class:`DimensionError` for an
    out-of-range index and :class:`DuplicateEntryError` if a (user, item)
    pair repeats.
    """
    triplets = list(triplets)
    users = np.fromiter((t[0] for t in triplets), dtype=np.int64, count=len(triplets))
    items = np.fromiter((t[1] for t in triplets), dtype=np.int64, count=len(triplets))
    ratings = np.fromiter((t[2] for t in triplets), dtype=np.float64, count=len(triplets))
    return from_arrays(users, items, ratings, m, n)


def from_arrays(users, items, ratings, m: int, n: int) -> RatingsMatrix:
    """Array form of :func:`from_triplets`."""
    users = np.asarray(users)
    items = np.asarray(items)
    ratings = np.asarray(ratings, dtype=np.float64)
    if m < 0 or n < 0:
        raise DimensionError(f"matrix dimensions must be non-negative, got {m}x{n}")
    if not (users.shape == items.shape == ratings.shape) or users.ndim != 1:
        raise DimensionError("users, items and ratings must be 1-D arrays of equal length")
    nnz = len(users)
    if nnz:
        if users.min() < 0 or users.max() >= m:
            bad = int(np.flatnonzero((users < 0) | (users >= m))[0])
            raise DimensionError(f"entry {bad}: user {users[bad]} outside [0, {m})")
        if items.min() < 0 or items.max() >= n:
            bad = int(np.flatnonzero((items < 0) | (items >= n))[0])
            raise DimensionError(f"entry {bad}: item {items[bad]} outside [0, {n})")
        if not np.all(np.isfinite(ratings)):
            bad = int(np.flatnonzero(~np.isfinite(ratings))[0])
            raise ParameterError(f"entry {bad}: rating {ratings[bad]} is not finite")

    users = users.astype(np.int64, copy=False)
    items = items.astype(np.int64, copy=False)

    by_row = np.lexsort((items, users))
    su, si = users[by_row], items[by_row]
    if nnz > 1:
        dup = (su[1:] == su[:-1]) & (si[1:] == si[:-1])
        if dup.any():
            k = int(np.flatnonzero(dup)[0])
            raise DuplicateEntryError(f"duplicate entry for user {su[k]}, item {si[k]}")

    by_col = np.lexsort((users, items))
    pos_in_col = np.empty(nnz, dtype=OFFSET_DTYPE)
    pos_in_col[by_col] = np.arange(nnz, dtype=OFFSET_DTYPE)
    xlink = pos_in_col[by_row]
    xlink_col = np.empty(nnz, dtype=OFFSET_DTYPE)
    xlink_col[xlink] = np.arange(nnz, dtype=OFFSET_DTYPE)

    row_start = np.zeros(m + 1, dtype=OFFSET_DTYPE)
    np.cumsum(np.bincount(users, minlength=m), out=row_start[1:])
    col_start = np.zeros(n + 1, dtype=OFFSET_DTYPE)
    np.cumsum(np.bincount(items, minlength=n), out=col_start[1:])

    return RatingsMatrix(
        m,
        n,
        row_start,
        si.astype(INDEX_DTYPE),
        ratings[by_row].copy(),
        col_start,
        users[by_col].astype(INDEX_DTYPE),
        ratings[by_col].copy(),
        xlink,
        xlink_col,
    )


class ResidualMatrix:
    """
    Mutable values over the sparsity pattern of a :class:`RatingsMatrix`.

    The structural arrays (offsets, indices, cross-links) are shared with the
    parent.  ``val_row`` and ``val_col`` must agree through ``xlink`` at every
    phase boundary; :meth:`layouts_agree` checks that bitwise.
    """

    __slots__ = ("base", "val_row", "val_col")

    def __init__(self, base: RatingsMatrix, val_row: np.ndarray, val_col: np.ndarray):
        self.base = base
        self.val_row = val_row
        self.val_col = val_col

    @property
    def m(self):
        return self.base.m

    @property
    def n(self):
        return self.base.n

    @property
    def nnz(self):
        return self.base.nnz

    @property
    def dtype(self):
        return self.val_row.dtype

    def layouts_agree(self) -> bool:
        """True if both layouts hold bitwise-identical values."""
        return bool(np.array_equal(self.val_row.view(_uint_of(self.dtype)),
                                   self.val_col[self.base.xlink].view(_uint_of(self.dtype))))

    def copy(self) -> ResidualMatrix:
        return ResidualMatrix(self.base, self.val_row.copy(), self.val_col.copy())

    def __repr__(self):
        return f"<ResidualMatrix {self.m}x{self.n}, nnz={self.nnz}, dtype={self.dtype}>"


def _uint_of(dtype):
    return np.uint64 if np.dtype(dtype).itemsize == 8 else np.uint32


def residual_from(a: RatingsMatrix, dtype=np.float64) -> ResidualMatrix:
    """Residual for an all-zero W, i.e. a copy of ``a``'s values."""
    return ResidualMatrix(a, a.val_row.astype(dtype), a.val_col.astype(dtype))


def row_slice(mat, i: int) -> list[tuple[int, int]]:
    """``(item, entry_position)`` pairs of row ``i``, ascending by item."""
    base = getattr(mat, "base", mat)
    if not 0 <= i < base.m:
        raise DimensionError(f"row {i} outside [0, {base.m})")
    lo, hi = int(base.row_start[i]), int(base.row_start[i + 1])
    return [(int(base.col_of[e]), e) for e in range(lo, hi)]


def col_slice(mat, j: int) -> list[tuple[int, int]]:
    """``(user, entry_position)`` pairs of column ``j``, ascending by user.

    Entry positions index the column layout.
    """
    base = getattr(mat, "base", mat)
    if not 0 <= j < base.n:
        raise DimensionError(f"column {j} outside [0, {base.n})")
    lo, hi = int(base.col_start[j]), int(base.col_start[j + 1])
    return [(int(base.row_of[e]), e) for e in range(lo, hi)]


def check_structure(mat: RatingsMatrix) -> None:
    """Assert the structural invariants of ``mat``; raises ``AssertionError``."""
    nnz = mat.nnz
    assert mat.row_start[0] == 0 and mat.row_start[-1] == nnz
    assert mat.col_start[0] == 0 and mat.col_start[-1] == nnz
    assert np.all(np.diff(mat.row_start) >= 0)
    assert np.all(np.diff(mat.col_start) >= 0)
    users = mat.users_of_entries()
    items = np.repeat(np.arange(mat.n), mat.col_counts())
    for i in range(mat.m):
        c = mat.col_of[mat.row_start[i]:mat.row_start[i + 1]]
        assert np.all(np.diff(c) > 0)
    for j in range(mat.n):
        r = mat.row_of[mat.col_start[j]:mat.col_start[j + 1]]
        assert np.all(np.diff(r) > 0)
    assert np.array_equal(mat.val_row, mat.val_col[mat.xlink])
    assert np.array_equal(users, mat.row_of[mat.xlink])
    assert np.array_equal(mat.col_of, items[mat.xlink])
    assert np.array_equal(mat.xlink[mat.xlink_col], np.arange(nnz))


def max_offset_capacity() -> int:
    """Largest entry count the offset type can address."""
    return int(np.iinfo(OFFSET_DTYPE).max)

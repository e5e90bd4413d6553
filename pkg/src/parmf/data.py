"""
Ratings files, ID remapping and train/probe splits.

Files are plain text with one rating per line: ``user item rating``,
whitespace separated.  Extra columns (e.g. a timestamp) are ignored; blank
lines and lines starting with ``#`` are skipped.  User and item IDs are
arbitrary integers and get remapped to dense 0-based indices in ascending
ID order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, DimensionError, ParameterError
from .model import ProbeSet
from .sparse import RatingsMatrix, from_arrays


@dataclass
class RatingsTable:
    """Ratings with external IDs, in file order."""

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray

    def __len__(self):
        return len(self.users)

    def take(self, idx) -> RatingsTable:
        return RatingsTable(self.users[idx], self.items[idx], self.ratings[idx])


def read_ratings(path) -> RatingsTable:
    users, items, ratings = [], [], []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) < 3:
                raise DataFormatError(f"expected 'user item rating', got {s!r}", path, lineno)
            try:
                u, i, r = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise DataFormatError(f"cannot parse {s!r}", path, lineno) from None
            if not math.isfinite(r):
                raise DataFormatError(f"rating {parts[2]!r} is not finite", path, lineno)
            users.append(u)
            items.append(i)
            ratings.append(r)
    return RatingsTable(np.array(users, dtype=np.int64), np.array(items, dtype=np.int64),
                        np.array(ratings, dtype=np.float64))


def write_ratings(path, table: RatingsTable) -> None:
    with open(path, "w") as f:
        for u, i, r in zip(table.users.tolist(), table.items.tolist(), table.ratings.tolist()):
            f.write(f"{u} {i} {r!r}\n")


@dataclass
class IdMap:
    """Sorted external IDs; position in the array is the dense index."""

    users: np.ndarray
    items: np.ndarray

    @classmethod
    def fit(cls, table: RatingsTable) -> IdMap:
        return cls(np.unique(table.users), np.unique(table.items))

    @staticmethod
    def _encode(known, ids, what):
        idx = np.searchsorted(known, ids)
        ok = idx < len(known)
        ok[ok] = known[idx[ok]] == ids[ok]
        if not ok.all():
            bad = ids[~ok][0]
            raise DimensionError(f"{what} id {bad} does not appear in the training data")
        return idx

    def encode(self, table: RatingsTable) -> tuple[np.ndarray, np.ndarray]:
        return (self._encode(self.users, table.users, "user"),
                self._encode(self.items, table.items, "item"))

    def save(self, path):
        Path(path).write_text(json.dumps({"users": self.users.tolist(), "items": self.items.tolist()}))

    @classmethod
    def load(cls, path) -> IdMap:
        d = json.loads(Path(path).read_text())
        return cls(np.array(d["users"], dtype=np.int64), np.array(d["items"], dtype=np.int64))


def to_matrix(table: RatingsTable, ids: IdMap | None = None) -> tuple[RatingsMatrix, IdMap]:
    ids = ids or IdMap.fit(table)
    u, i = ids.encode(table)
    return from_arrays(u, i, table.ratings, len(ids.users), len(ids.items)), ids


def to_probe(table: RatingsTable, ids: IdMap) -> ProbeSet:
    u, i = ids.encode(table)
    return ProbeSet(u, i, table.ratings)


def split(table: RatingsTable, ratio: float, seed=0) -> tuple[np.ndarray, np.ndarray]:
    """
    Random train/probe split; returns boolean masks in file order.

    Every user and every item keeps at least one training rating (the first
    of its ratings in a seeded shuffle).  ``round(ratio * len(table))``
    ratings go to the probe set, fewer if not enough are eligible.
    """
    if not 0 < ratio < 1:
        raise ParameterError(f"split ratio must be in (0, 1), got {ratio}")
    n = len(table)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    anchor = np.zeros(n, dtype=bool)
    for col in (table.users, table.items):
        _, first = np.unique(col[perm], return_index=True)
        anchor[perm[first]] = True
    eligible = perm[~anchor[perm]]
    n_probe = min(int(round(ratio * n)), len(eligible))
    probe = np.zeros(n, dtype=bool)
    probe[eligible[:n_probe]] = True
    return ~probe, probe


def split_file(path, ratio: float, seed, out_dir) -> tuple[Path, Path]:
    table = read_ratings(path)
    train, probe = split(table, ratio, seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_path, probe_path = out_dir / "train.txt", out_dir / "probe.txt"
    write_ratings(train_path, table.take(train))
    write_ratings(probe_path, table.take(probe))
    return train_path, probe_path

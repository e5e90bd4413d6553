import os
import sys
from pathlib import Path

import numpy as np
import pytest

from parmf.sparse import from_arrays

ROOT = Path(__file__).resolve().parents[1]


def random_ratings(rng, m, n, density=0.3, low=1.0, high=5.0, ensure_rows=False):
    """Random sparse matrix; returns (RatingsMatrix, triplet list)."""
    mask = rng.random((m, n)) < density
    if ensure_rows:
        for i in range(m):
            if not mask[i].any():
                mask[i, rng.integers(n)] = True
    u, i = np.nonzero(mask)
    r = rng.uniform(low, high, len(u))
    trip = [(int(a), int(b), float(c)) for a, b, c in zip(u, i, r)]
    return from_arrays(u, i, r, m, n), trip


def planted(rng, m, n, k, density=1.0, noise=0.0, scale=1.0, offset=0.0):
    """Ratings from planted factors; returns (RatingsMatrix, triplets, W, H)."""
    w = rng.normal(0, scale, (m, k))
    h = rng.normal(0, scale, (n, k))
    full = w @ h.T + offset
    if density >= 1.0:
        mask = np.ones((m, n), dtype=bool)
    else:
        mask = rng.random((m, n)) < density
    u, i = np.nonzero(mask)
    r = full[u, i] + (rng.normal(0, noise, len(u)) if noise else 0.0)
    trip = [(int(a), int(b), float(c)) for a, b, c in zip(u, i, r)]
    return from_arrays(u, i, r, m, n), trip, w, h


def synthetic_million(seed=0, m=40_000, n=8_000, nnz=1_000_000, k=5):
    """1M-rating planted low-rank matrix with noise, on a 1-5 like scale."""
    rng = np.random.default_rng(seed)
    flat = rng.choice(m * n, nnz, replace=False)
    u, i = flat // n, flat % n
    w = rng.normal(0, 1, (m, k))
    h = rng.normal(0, 1, (n, k))
    r = np.einsum("ij,ij->i", w[u], h[i]) / 2 + 3 + rng.normal(0, 0.5, nnz)
    return u, i, r


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


@pytest.fixture(scope="session")
def movielens_path():
    """MovieLens 100k triplet file; fetched from the package mirror if needed."""
    env = os.environ.get("PARMF_MOVIELENS")
    if env:
        return Path(env)
    sys.path.insert(0, str(ROOT / "scripts"))
    try:
        from fetch_movielens import fetch
    finally:
        sys.path.pop(0)
    try:
        return fetch()
    except Exception as e:  # noqa: BLE001
        pytest.skip(f"MovieLens 100k unavailable: {e}")


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` prints and records one acceptance line."""

    def record(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        request.config.stash[_ACCEPTANCE].append((n, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)

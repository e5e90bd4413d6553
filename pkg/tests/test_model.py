import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parmf.errors import DataFormatError, DimensionError, EvaluationError, ParameterError
from parmf.model import (
    FactorModel,
    ProbeSet,
    frobenius_sq,
    global_mean_rmse,
    init_als,
    init_ccd,
    load_model,
    objective,
    predict,
    rmse,
    save_model,
    top_n,
)
from parmf.sparse import from_arrays, from_triplets, residual_from, row_slice

import oracles
from conftest import planted, random_ratings

# the 4-entry fixture; the expected value is the exact rational sum 103783/2000
FOUR = [(0, 0, 5.0), (0, 1, 3.0), (1, 0, 4.0), (1, 2, 1.0)]
FOUR_W = [[1.0, 0.5], [0.2, -1.0]]
FOUR_H = [[2.0, 1.0], [0.5, 0.5], [-1.0, 3.0]]
FOUR_OBJECTIVE = 51.8915


def test_init_als_deterministic():
    a = init_als(FactorModel.zeros(7, 9, 3), seed=11)
    b = init_als(FactorModel.zeros(7, 9, 3), seed=11)
    assert np.array_equal(a.h, b.h)
    assert not np.any(a.w)


def test_init_als_range():
    model = init_als(FactorModel.zeros(50, 400, 5), seed=0)
    assert model.h.min() > 0
    assert model.h.max() <= 0.44722
    assert model.h.max() <= 1 / math.sqrt(5)


def test_init_als_seeds_differ():
    a = init_als(FactorModel.zeros(3, 4, 2), seed=1)
    b = init_als(FactorModel.zeros(3, 4, 2), seed=2)
    assert np.any(a.h != b.h)


def test_init_ccd_zero_start(rng):
    a, trip = random_ratings(rng, 6, 5)
    model = init_ccd(FactorModel(rng.normal(size=(6, 2)), rng.normal(size=(5, 2))))
    assert all(predict(model, i, j) == 0 for i in range(6) for j in range(5))
    assert objective(model, a, 0.0) == math.fsum(r * r for _, _, r in trip)
    r = residual_from(a)
    assert np.array_equal(r.val_row, a.val_row)


def test_init_ccd_seeded_keeps_residual():
    model = init_ccd(FactorModel.zeros(4, 3, 2), seed=5)
    assert not np.any(model.w) and np.all(model.h > 0)


def test_predict():
    assert predict(FactorModel.zeros(2, 2, 3), 1, 1) == 0
    assert predict(FactorModel(np.array([[2.0]]), np.array([[3.0]])), 0, 0) == 6.0


def test_predict_naive(rng):
    model = FactorModel(rng.normal(size=(4, 5)), rng.normal(size=(3, 5)))
    for i in range(4):
        for j in range(3):
            assert predict(model, i, j) == pytest.approx(sum(model.w[i, t] * model.h[j, t] for t in range(5)),
                                                         rel=1e-14)


def test_predict_bounds():
    with pytest.raises(DimensionError):
        predict(FactorModel.zeros(2, 2, 1), 2, 0)
    with pytest.raises(DimensionError):
        predict(FactorModel.zeros(2, 2, 1), 0, -1)


def test_objective_zero_model(rng):
    a, trip = random_ratings(rng, 8, 8)
    assert objective(FactorModel.zeros(8, 8, 2), a, 0.0) == math.fsum(r * r for *_, r in trip)


def test_objective_exact_factorization(rng):
    a, _, w, h = planted(rng, 10, 7, 3, density=0.5)
    val = objective(FactorModel(w, h), a, 0.0)
    assert val <= 1e-20 * math.fsum(x * x for x in a.val_row.tolist())


def test_objective_four_entry_fixture():
    a = from_triplets(FOUR, 2, 3)
    model = FactorModel(np.array(FOUR_W), np.array(FOUR_H))
    val = objective(model, a, 0.1)
    assert val == pytest.approx(FOUR_OBJECTIVE, rel=1e-14)
    assert val == pytest.approx(oracles.objective(FOUR, model.w, model.h, 0.1), rel=1e-15)


def test_objective_negative_lambda():
    with pytest.raises(ParameterError):
        objective(FactorModel.zeros(1, 1, 1), from_triplets([], 1, 1), -0.1)


def test_objective_dimension_mismatch():
    with pytest.raises(DimensionError):
        objective(FactorModel.zeros(2, 2, 1), from_triplets([], 3, 2), 0.1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 10))
def test_objective_oracle_and_floor(seed, lam):
    rng = np.random.default_rng(seed)
    a, trip = random_ratings(rng, 6, 5, density=0.5)
    model = FactorModel(rng.normal(size=(6, 3)), rng.normal(size=(5, 3)))
    val = objective(model, a, lam)
    assert val == pytest.approx(oracles.objective(trip, model.w, model.h, lam), rel=1e-12, abs=1e-12)
    assert val >= lam * frobenius_sq(model)


def test_objective_invariant_under_user_relabeling(rng):
    a, trip = random_ratings(rng, 12, 9)
    model = FactorModel(rng.normal(size=(12, 4)), rng.normal(size=(9, 4)))
    perm = rng.permutation(12)
    inv = np.argsort(perm)
    u, i, r = a.arrays()
    b = from_arrays(inv[u], i, r, 12, 9)
    moved = FactorModel(model.w[perm], model.h)
    assert objective(moved, b, 0.3) == objective(model, a, 0.3)


def test_objective_single_precision_model(rng):
    a, trip = random_ratings(rng, 6, 6)
    w, h = rng.normal(size=(6, 2)).astype(np.float32), rng.normal(size=(6, 2)).astype(np.float32)
    assert objective(FactorModel(w, h), a, 0.1) == pytest.approx(oracles.objective(trip, w, h, 0.1), rel=1e-12)


def test_rmse_perfect(rng):
    _, trip, w, h = planted(rng, 5, 4, 2)
    assert rmse(FactorModel(w, h), ProbeSet.from_triplets(trip)) <= 1e-15


def test_rmse_single_entry():
    model = FactorModel(np.array([[1.0]]), np.array([[2.0]]))
    assert rmse(model, ProbeSet([0], [0], [4.0])) == 2.0


def test_rmse_empty():
    with pytest.raises(EvaluationError):
        rmse(FactorModel.zeros(1, 1, 1), ProbeSet([], [], []))


def test_rmse_out_of_range():
    with pytest.raises(DimensionError):
        rmse(FactorModel.zeros(1, 1, 1), ProbeSet([1], [0], [1.0]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rmse_non_negative(seed):
    rng = np.random.default_rng(seed)
    model = FactorModel(rng.normal(size=(4, 2)), rng.normal(size=(5, 2)))
    users, items = rng.integers(0, 4, 10), rng.integers(0, 5, 10)
    exact = np.einsum("ij,ij->i", model.w[users], model.h[items])
    assert rmse(model, ProbeSet(users, items, exact)) <= 1e-15
    noisy = exact + rng.normal(size=10)
    want = math.sqrt(sum((r - p) ** 2 for r, p in zip(noisy, exact)) / 10)
    assert rmse(model, ProbeSet(users, items, noisy)) == pytest.approx(want, rel=1e-12)
    assert rmse(model, ProbeSet(users, items, noisy)) > 0


def test_top_n_zero_model():
    model = FactorModel.zeros(1, 6, 2)
    assert top_n(model, 0, 3, exclude=[1]) == [(0, 0.0), (2, 0.0), (3, 0.0)]


def test_top_n_sorted():
    model = FactorModel(np.array([[1.0]]), np.array([[1.0], [2.0], [3.0]]))
    assert top_n(model, 0, 2) == [(2, 3.0), (1, 2.0)]


def test_top_n_exhaustion_with_row_slice():
    a = from_triplets([(0, 0, 1.0), (0, 2, 1.0)], 1, 4)
    model = FactorModel(np.ones((1, 1)), np.array([[4.0], [3.0], [2.0], [1.0]]))
    assert top_n(model, 0, 10, exclude=row_slice(a, 0)) == [(1, 3.0), (3, 1.0)]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_top_n_properties(seed, count):
    rng = np.random.default_rng(seed)
    # rounded scores force ties
    model = FactorModel(np.ones((1, 1)), rng.integers(-2, 3, (10, 1)).astype(float))
    excl = set(rng.choice(10, 3, replace=False).tolist())
    out = top_n(model, 0, count, exclude=excl)
    items = [j for j, _ in out]
    assert len(items) == len(set(items)) == min(count, 7)
    assert not excl & set(items)
    for (j1, s1), (j2, s2) in zip(out, out[1:]):
        assert s1 > s2 or (s1 == s2 and j1 < j2)


def test_top_n_errors():
    with pytest.raises(DimensionError):
        top_n(FactorModel.zeros(1, 2, 1), 1, 1)
    with pytest.raises(ParameterError):
        top_n(FactorModel.zeros(1, 2, 1), 0, 0)


@pytest.mark.parametrize("dtype", [np.float64, np.float32])
def test_save_load_bit_exact(tmp_path, rng, dtype):
    model = FactorModel(rng.normal(size=(5, 3)).astype(dtype), rng.normal(size=(4, 3)).astype(dtype))
    model.w[0, 0] = np.nextafter(dtype(1), dtype(2))
    save_model(tmp_path / "m.bin", model)
    back = load_model(tmp_path / "m.bin")
    assert back.w.dtype == dtype
    assert back.w.tobytes() == model.w.tobytes() and back.h.tobytes() == model.h.tobytes()


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"not a model at all, definitely not")
    with pytest.raises(DataFormatError):
        load_model(p)
    save_model(p, FactorModel.zeros(2, 2, 2))
    p.write_bytes(p.read_bytes()[:-1])
    with pytest.raises(DataFormatError):
        load_model(p)


def test_global_mean_rmse():
    probe = ProbeSet([0, 0], [0, 1], [1.0, 5.0])
    assert global_mean_rmse([3.0, 3.0], probe) == 2.0

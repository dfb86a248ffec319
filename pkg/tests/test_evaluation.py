import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from parampca import BinGrid, Dataset, Penalties, TrainConfig, UsageError
from parampca.baselines import fit_ipca, fit_pca_global
from parampca.evaluation import (
    GroundTruth,
    baseline_projector,
    compare_methods,
    mean_rmse,
    nested_subsets,
    ppca_mean_rmse,
    ppca_projector,
    rmse_per_observation,
)
from parampca.errors import DimensionError
from parampca.optim import solve_coefficients
from parampca.synth import SynthSpec, default_grid, generate_dataset, true_bases, true_means


def test_rmse_examples():
    assert rmse_per_observation([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse_per_observation([3.0, 4.0], [0.0, 0.0]) == math.sqrt(12.5)
    assert rmse_per_observation([3.0, 4.0, 100.0], [0, 0, 0], [True, True, False]) == math.sqrt(12.5)
    with pytest.raises(UsageError):
        rmse_per_observation([1.0], [0.0], [False])
    with pytest.raises(DimensionError):
        rmse_per_observation([1.0, 2.0], [0.0])


def test_mean_rmse_examples():
    d = Dataset([[1.0], [3.0]], [0.0, 0.0])
    assert mean_rmse(d, lambda x, t: np.zeros(1)) == 2.0
    assert mean_rmse(d, lambda x, t: x) == 0.0


def test_mean_rmse_oracle(rng):
    d = Dataset(rng.normal(size=(20, 3)), rng.uniform(0, 2, 20))
    m = fit_ipca(d, BinGrid([0.0, 1.0, 2.0]), 1)
    ref = np.mean([np.sqrt(np.mean((x - m.project(x, t)) ** 2)) for x, t in zip(d.X, d.theta)])
    assert mean_rmse(d, baseline_projector(m)) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("masked", [False, True])
def test_ppca_vectorised_rmse_matches_projector(masked):
    r = np.random.default_rng(2)
    model, data, _, _ = random_instance(r, B=3, K=4, V=2, n=15, masked=masked)
    assert ppca_mean_rmse(model, data) == pytest.approx(mean_rmse(data, ppca_projector(model)), rel=1e-12)


@pytest.mark.invariant
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rmse_permutation_invariance(seed):
    r = np.random.default_rng(seed)
    x, y = r.normal(size=6), r.normal(size=6)
    mask = r.random(6) < 0.7
    mask[0] = True
    p = r.permutation(6)
    assert rmse_per_observation(x[p], y[p], mask[p]) == pytest.approx(rmse_per_observation(x, y, mask), rel=1e-14)


@pytest.mark.invariant
@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mean_rmse_order_invariance(seed):
    r = np.random.default_rng(seed)
    d = Dataset(r.normal(size=(12, 3)), r.uniform(0, 1, 12))
    m = fit_pca_global(d, 1)
    p = r.permutation(12)
    a = mean_rmse(d, baseline_projector(m))
    b = mean_rmse(d.subset(p), baseline_projector(m))
    assert b == pytest.approx(a, rel=1e-13)


@pytest.mark.invariant
@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ppca_rmse_least_squares_optimal(seed):
    r = np.random.default_rng(seed)
    model, data, _, _ = random_instance(r, B=3, K=5, V=2, n=5)
    c = solve_coefficients(model, data).values
    from parampca.model import reconstruct

    for i, (x, t) in enumerate(zip(data.X, data.theta)):
        best = rmse_per_observation(x, reconstruct(model, t, c[i]))
        for _ in range(5):
            other = c[i] + r.normal(scale=0.1, size=2)
            assert rmse_per_observation(x, reconstruct(model, t, other)) >= best - 1e-14


def test_nested_subsets(rng):
    g = BinGrid.equal(0, 3, 3)
    d = Dataset(rng.normal(size=(60, 2)), rng.uniform(0, 3, 60))
    subs = nested_subsets(d, g, [2, 5, 10], seed=0)
    assert set(subs[2]) <= set(subs[5]) <= set(subs[10])
    from parampca.model import assign_bins

    for s, idx in subs.items():
        assert np.all(np.bincount(assign_bins(g, d.theta[idx]), minlength=3) == s)
    again = nested_subsets(d, g, [2, 5, 10], seed=0)
    for s in subs:
        np.testing.assert_array_equal(subs[s], again[s])
    with pytest.raises(UsageError, match="fewer than 100"):
        nested_subsets(d, g, [100], seed=0)


def test_compare_single_method_matches_direct_calls(rng):
    d, _ = generate_dataset(SynthSpec(seed=1))
    g = default_grid()
    rows = compare_methods(d, d, g, 2, {}, methods=("ipca",))
    assert len(rows) == 1
    m = fit_ipca(d, g, 2)
    assert rows[0].train_rmse == mean_rmse(d, baseline_projector(m))
    assert math.isnan(rows[0].mean_sse)


def test_compare_rows_per_size_with_truth():
    d, _ = generate_dataset(SynthSpec(thetas=np.repeat(np.arange(4.0, 357, 8), 2)[:84], seed=2))
    g = BinGrid.equal(0, 360, 6)
    truth = GroundTruth(d.theta, true_means(d.theta), true_bases(d.theta))
    cfg = {"ppca": TrainConfig(Penalties(0.008, 4.2, 20.0), n_c=3, n_v=20)}
    rows = compare_methods(d, d, g, 2, cfg, sizes=[3, 5], seed=0, truth=truth)
    assert [(r.method, r.per_bin) for r in rows] == [
        ("pca", 3), ("ipca", 3), ("ppca", 3), ("pca", 5), ("ipca", 5), ("ppca", 5)
    ]
    assert all(r.n_train == 6 * r.per_bin for r in rows)
    assert all(np.isfinite(r.mean_sse) for r in rows)
    assert rows[2].lambda_v == 4.2


def test_compare_unknown_method(rng):
    d, _ = generate_dataset(SynthSpec())
    with pytest.raises(UsageError):
        compare_methods(d, d, default_grid(), 2, {}, methods=("spca",))

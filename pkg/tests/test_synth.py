import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parampca import BinGrid, OutOfRangeError, PpcaModel, RankDeficientError, UsageError
from parampca.synth import (
    DEFAULT_THETAS,
    SynthSpec,
    default_grid,
    generate_dataset,
    mean_recovery_sse,
    random_thetas,
    subspace_recovery_error,
    true_basis,
    true_bases,
    true_mean,
)


def test_true_mean_values():
    np.testing.assert_allclose(true_mean(0.0), [0.0, 8.0, np.sin(0.6)], atol=1e-15)
    assert true_mean(0.0)[2] == pytest.approx(0.564642473, abs=1e-9)
    m = true_mean(360.0)
    assert m[0] == pytest.approx(-1.0, abs=1e-15)
    assert m[1] == pytest.approx(-10.2, abs=1e-12)
    assert m[2] == pytest.approx(np.sin(4.375 * np.pi + 0.6), abs=1e-15)
    assert true_mean(180.0)[1] == pytest.approx(0.5 * (true_mean(0.0)[1] + true_mean(360.0)[1]), abs=1e-12)


def test_true_basis_values():
    P = true_basis(0.0)
    np.testing.assert_allclose(P[:, 0], [np.sin(0.4), np.tan(-0.8), -1.1], atol=1e-15)
    np.testing.assert_allclose(P[:, 1], [1.0, np.cos(-0.4), 1.4], atol=1e-15)
    a, b, c = (true_basis(t)[2, 1] for t in (0.0, 100.0, 200.0))
    assert b == pytest.approx(0.5 * (a + c), abs=1e-12)
    assert np.linalg.norm(np.cross(*true_basis(100.0).T)) > 0.1


def test_truth_out_of_range():
    with pytest.raises(OutOfRangeError):
        true_mean(-1.0)
    with pytest.raises(OutOfRangeError):
        true_bases([10.0, 361.0])


def test_default_spec():
    d, beta = generate_dataset(SynthSpec())
    assert d.n == 45 and d.K == 3
    np.testing.assert_array_equal(d.theta, np.arange(4, 357, 8))
    assert beta.shape == (45, 2) and np.all(np.abs(beta) <= 1)


def test_noiseless_is_true_mean():
    d, _ = generate_dataset(SynthSpec(coeff_range=0, noise_range=0))
    np.testing.assert_array_equal(d.X, np.array([true_mean(t) for t in d.theta]))


def test_seed_determinism():
    a, _ = generate_dataset(SynthSpec(seed=3))
    b, _ = generate_dataset(SynthSpec(seed=3))
    c, _ = generate_dataset(SynthSpec(seed=4))
    assert a.X.tobytes() == b.X.tobytes()
    assert a.X.tobytes() != c.X.tobytes()


def test_spec_validation():
    with pytest.raises(UsageError):
        SynthSpec(noise_range=-1)


def test_random_thetas_per_bin():
    t = random_thetas(3, seed=0, per_bin=True)
    g = default_grid()
    assert t.size == 42
    counts = np.histogram(t, bins=g.endpoints)[0]
    np.testing.assert_array_equal(counts, 3)


def truth_model(thetas=None):
    """Model whose endpoints carry the true means and bases."""
    g = default_grid()
    e = g.endpoints
    return PpcaModel(g, np.array([true_mean(t) for t in e]), true_bases(e))


def test_mean_sse_examples():
    m = truth_model()
    assert mean_recovery_sse(m, m.grid.endpoints) == 0.0
    g = BinGrid([0.0, 360.0])
    means = np.array([true_mean(0.0) + [1.0, 2.0, 2.0], true_mean(360.0)])
    bad = PpcaModel(g, means, np.zeros((2, 3, 1)))
    assert mean_recovery_sse(bad, [0.0]) == pytest.approx(9.0, abs=1e-12)


def test_mean_sse_oracle(rng):
    g = default_grid()
    m = PpcaModel(g, rng.normal(size=(15, 3)), rng.normal(size=(15, 3, 2)))
    ref = sum(np.sum((m.mean_at(t) - true_mean(t)) ** 2) for t in DEFAULT_THETAS)
    assert mean_recovery_sse(m) == pytest.approx(ref, rel=1e-12)


def test_subspace_error_examples():
    m = truth_model()
    assert subspace_recovery_error(m, m.grid.endpoints) < 1e-25
    e = np.eye(3)
    g = BinGrid([0.0, 1.0])
    plane = PpcaModel(g, np.zeros((2, 3)), np.stack([e[:, :2], e[:, :2]]))
    truth = np.stack([np.c_[e[:, 2], e[:, 0]]])
    assert subspace_recovery_error(plane, [0.5], truth) == pytest.approx(1.0, abs=1e-15)


def test_subspace_error_projector_oracle(rng):
    g = default_grid()
    m = PpcaModel(g, np.zeros((15, 3)), rng.normal(size=(15, 3, 2)))
    ref = 0.0
    for t in DEFAULT_THETAS:
        Q = np.linalg.qr(m.basis_at(t))[0]
        R = (np.eye(3) - Q @ Q.T) @ true_basis(t)
        ref += np.sum(R * R)
    assert subspace_recovery_error(m) == pytest.approx(ref, rel=1e-10)


def test_subspace_error_rank_deficient_names_theta():
    g = BinGrid([0.0, 360.0])
    p = np.zeros((2, 3, 2))
    p[:, 0, :] = 1.0
    m = PpcaModel(g, np.zeros((2, 3)), p)
    with pytest.raises(RankDeficientError, match="theta=4.0"):
        subspace_recovery_error(m, [4.0])


@pytest.mark.invariant
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_subspace_error_span_invariant(seed):
    r = np.random.default_rng(seed)
    g = BinGrid([0.0, 360.0])
    P = r.normal(size=(3, 2))
    A = r.normal(size=(2, 2))
    if abs(np.linalg.det(A)) < 1e-3:
        return
    a = PpcaModel(g, np.zeros((2, 3)), np.stack([P, P]))
    b = PpcaModel(g, np.zeros((2, 3)), np.stack([P @ A, P @ A]))
    t = r.uniform(0, 360, 5)
    assert subspace_recovery_error(b, t) == pytest.approx(subspace_recovery_error(a, t), rel=1e-9, abs=1e-12)


@pytest.mark.invariant
def test_truth_sampled_model_has_zero_sse():
    m = truth_model()
    assert mean_recovery_sse(m, m.grid.endpoints) == 0.0


@pytest.mark.invariant
def test_noise_free_data_on_true_plane():
    d, _ = generate_dataset(SynthSpec(noise_range=0))
    for x, t in zip(d.X, d.theta):
        Q = np.linalg.qr(true_basis(t))[0]
        r = x - true_mean(t)
        assert np.linalg.norm(r - Q @ (Q.T @ r)) < 1e-12

"""Synthetic 3-D data drawn around a known plane that moves with theta on [0, 360]."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import OutOfRangeError, RankDeficientError, UsageError
from .model import BinGrid, Dataset

THETA_RANGE = (0.0, 360.0)
DEFAULT_THETAS = np.arange(4.0, 357.0, 8.0)  # 4, 12, ..., 356


def default_grid(n_bins: int = 14) -> BinGrid:
    return BinGrid.equal(THETA_RANGE[0], THETA_RANGE[1], n_bins)


def _check_theta(theta) -> np.ndarray:
    t = np.asarray(theta, dtype=float)
    if np.any((t < THETA_RANGE[0]) | (t > THETA_RANGE[1])) or not np.all(np.isfinite(t)):
        raise OutOfRangeError(f"theta must lie in [0, 360], got {t}")
    return t


def true_means(thetas) -> np.ndarray:
    t = _check_theta(np.atleast_1d(thetas))
    return np.stack(
        [
            np.sin(7 * np.pi * t / 720),
            -91 * t / 1800 + 8,
            np.sin(7 * np.pi * t / 576 + 0.6),
        ],
        axis=-1,
    )


def true_bases(thetas) -> np.ndarray:
    """True basis columns at each theta, shape (m, 3, 2). Neither normalised nor orthogonal."""
    t = _check_theta(np.atleast_1d(thetas))
    tan_arg = 7 * np.pi * t / 4860 - 0.8
    assert np.all(np.abs(tan_arg) < np.pi / 2)
    p1 = np.stack([np.sin(7 * np.pi * t / 1080 + 0.4), np.tan(tan_arg), 49 * t / 1800 - 1.1], axis=-1)
    p2 = np.stack([np.cos(7 * np.pi * t / 972), np.cos(7 * np.pi * t / 576 - 0.4), 7 * t / 600 + 1.4], axis=-1)
    return np.stack([p1, p2], axis=-1)


def true_mean(theta: float) -> np.ndarray:
    return true_means([theta])[0]


def true_basis(theta: float) -> np.ndarray:
    return true_bases([theta])[0]


@dataclass(frozen=True)
class SynthSpec:
    thetas: np.ndarray = field(default_factory=lambda: DEFAULT_THETAS.copy())
    coeff_range: float = 1.0
    noise_range: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if self.coeff_range < 0 or self.noise_range < 0:
            raise UsageError("coefficient and noise bounds must be non-negative")
        _check_theta(self.thetas)


def generate_dataset(spec: SynthSpec = SynthSpec()) -> Tuple[Dataset, np.ndarray]:
    """Draw ``x = mu(theta) + P(theta) beta + noise``; returns the dataset and the true coefficients."""
    rng = np.random.default_rng(spec.seed)
    t = np.asarray(spec.thetas, dtype=float)
    n = t.size
    beta = rng.uniform(-spec.coeff_range, spec.coeff_range, size=(n, 2))
    noise = rng.uniform(-spec.noise_range, spec.noise_range, size=(n, 3))
    X = true_means(t) + np.einsum("nkv,nv->nk", true_bases(t), beta) + noise
    return Dataset(X, t), beta


def random_thetas(n: int, seed: int, grid: Optional[BinGrid] = None, per_bin: bool = False) -> np.ndarray:
    """Uniform parameter draws on [0, 360], or ``n`` draws inside every bin of ``grid``."""
    rng = np.random.default_rng(seed)
    if not per_bin:
        return np.sort(rng.uniform(*THETA_RANGE, size=n))
    e = (grid or default_grid()).endpoints
    return np.concatenate([rng.uniform(lo, hi, size=n) for lo, hi in zip(e[:-1], e[1:])])


# -- recovery metrics ---------------------------------------------------------


def mean_recovery_sse(model, thetas=None, truth: Optional[np.ndarray] = None) -> float:
    """Sum over ``thetas`` of squared distances between the model's mean and the true mean."""
    t = DEFAULT_THETAS if thetas is None else np.asarray(thetas, dtype=float)
    truth = true_means(t) if truth is None else np.asarray(truth, dtype=float)
    est = np.array([model.mean_at(th) for th in t])
    return float(np.sum((est - truth) ** 2))


def subspace_recovery_error(model, thetas=None, truth: Optional[np.ndarray] = None) -> float:
    """Sum of squared distances from each true basis vector to the recovered span.

    ``truth`` defaults to the true bases, shape (m, K, 2).
    """
    t = DEFAULT_THETAS if thetas is None else np.asarray(thetas, dtype=float)
    truth = true_bases(t) if truth is None else np.asarray(truth, dtype=float)
    total = 0.0
    for th, P_true in zip(t, truth):
        P_hat = np.asarray(model.basis_at(th))
        U, s, _ = np.linalg.svd(P_hat, full_matrices=False)
        if s.size == 0 or s[-1] <= s[0] * max(P_hat.shape) * np.finfo(float).eps * 10:
            raise RankDeficientError(f"recovered basis at theta={float(th)!r} is rank deficient")
        resid = P_true - U @ (U.T @ P_true)
        total += float(np.sum(resid * resid))
    return total

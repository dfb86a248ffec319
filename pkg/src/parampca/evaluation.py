"""Reconstruction metrics and the PCA / IPCA / PPCA comparison protocol."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Iterable, Optional, Sequence

import numpy as np

from .baselines import fit_ipca, fit_pca_global
from .energy import residuals
from .errors import DimensionError, RankDeficientError, UsageError
from .model import BinGrid, Dataset, PpcaModel, active_entries, assign_bins, reconstruct
from .optim import TrainConfig, solve_coefficients, train
from .synth import mean_recovery_sse, subspace_recovery_error


def rmse_per_observation(x, reconstruction, active=None) -> float:
    """Root mean squared residual over the active entries."""
    x = np.asarray(x, dtype=float)
    reconstruction = np.asarray(reconstruction, dtype=float)
    if x.shape != reconstruction.shape:
        raise DimensionError(f"shape mismatch: {x.shape} vs {reconstruction.shape}")
    r = x - reconstruction
    if active is not None:
        r = r[np.asarray(active, bool)]
    if r.size == 0:
        raise UsageError("no active entries to average over")
    return math.sqrt(float(np.mean(r * r)))


Projector = Callable[[np.ndarray, float], object]


def ppca_projector(model: PpcaModel) -> Projector:
    """Least-squares coefficients then reconstruction; returns (vector, active entries)."""

    def project(x, theta):
        coeffs = solve_coefficients(model, Dataset(np.atleast_2d(x), [theta]))
        return reconstruct(model, theta, coeffs.values[0], with_active=True)

    return project


def baseline_projector(model) -> Projector:
    return lambda x, theta: model.project(x, theta)


def mean_rmse(dataset: Dataset, projector: Projector) -> float:
    """Average over observations of the per-observation RMSE."""
    if dataset.n == 0:
        raise UsageError("empty dataset")
    vals = []
    for x, theta in zip(dataset.X, dataset.theta):
        out = projector(x, theta)
        recon, active = out if isinstance(out, tuple) else (out, None)
        vals.append(rmse_per_observation(x, recon, active))
    return float(np.mean(vals))


def ppca_mean_rmse(model: PpcaModel, dataset: Dataset) -> float:
    """Vectorised equivalent of ``mean_rmse(dataset, ppca_projector(model))``."""
    coeffs = solve_coefficients(model, dataset)
    r = residuals(model, dataset, coeffs)
    act = active_entries(model, dataset.theta)
    counts = np.full(dataset.n, dataset.K) if act is None else act.sum(axis=1)
    if np.any(counts == 0):
        raise UsageError("an observation has no active entries")
    return float(np.mean(np.sqrt(np.sum(r * r, axis=1) / counts)))


def nested_subsets(dataset: Dataset, grid: BinGrid, sizes: Sequence[int], seed: int) -> Dict[int, np.ndarray]:
    """Per-bin training subsets of the given sizes, each contained in the next larger one.

    One random ordering per bin is drawn from ``seed``; the subset of size s
    takes the first s observations of every bin's ordering.
    """
    rng = np.random.default_rng(seed)
    bins = assign_bins(grid, dataset.theta)
    orders = [rng.permutation(np.flatnonzero(bins == j)) for j in range(grid.n_bins)]
    out = {}
    for s in sorted(set(int(s) for s in sizes)):
        if s < 1:
            raise UsageError("subset sizes must be positive")
        short = [j for j, o in enumerate(orders) if o.size < s]
        if short:
            raise UsageError(f"bin {short[0]} has only {orders[short[0]].size} observations, fewer than {s}")
        out[s] = np.sort(np.concatenate([o[:s] for o in orders]))
    return out


@dataclass
class MetricRow:
    method: str
    label: str
    per_bin: Optional[int]
    n_train: int
    train_rmse: float
    test_rmse: float
    mean_sse: float = float("nan")
    subspace_error: float = float("nan")
    lambda_m: float = float("nan")
    lambda_v: float = float("nan")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GroundTruth:
    thetas: np.ndarray
    means: np.ndarray  # (m, K)
    bases: np.ndarray  # (m, K, V)


def _recovery(model, truth: Optional[GroundTruth]):
    if truth is None:
        return float("nan"), float("nan")
    sse = mean_recovery_sse(model, truth.thetas, truth.means)
    try:
        sub = subspace_recovery_error(model, truth.thetas, truth.bases)
    except RankDeficientError:
        sub = float("nan")
    return sse, sub


def compare_methods(train_set: Dataset, test_set: Dataset, grid: BinGrid, V: int,
                    configs: Dict[str, TrainConfig], sizes: Optional[Iterable[int]] = None,
                    seed: int = 0, methods: Sequence[str] = ("pca", "ipca", "ppca"),
                    truth: Optional[GroundTruth] = None) -> list:
    """Fit each method on nested training subsets and report train/test mean RMSE.

    ``configs`` maps a label to a PPCA training configuration; every label
    yields its own PPCA row. Without ``sizes`` the full training set is used.
    """
    unknown = set(methods) - {"pca", "ipca", "ppca"}
    if unknown:
        raise UsageError(f"unknown method(s): {sorted(unknown)}")
    if sizes is None:
        subsets = {None: np.arange(train_set.n)}
    else:
        subsets = nested_subsets(train_set, grid, list(sizes), seed)
    rows = []
    for size, idx in subsets.items():
        tr = train_set.subset(idx)
        if "pca" in methods:
            m = fit_pca_global(tr, V)
            rows.append(MetricRow("pca", "pca", size, tr.n,
                                  mean_rmse(tr, baseline_projector(m)),
                                  mean_rmse(test_set, baseline_projector(m)),
                                  *_recovery(m, truth)))
        if "ipca" in methods:
            m = fit_ipca(tr, grid, V)
            rows.append(MetricRow("ipca", "ipca", size, tr.n,
                                  mean_rmse(tr, baseline_projector(m)),
                                  mean_rmse(test_set, baseline_projector(m)),
                                  *_recovery(m, truth)))
        if "ppca" in methods:
            for label, cfg in configs.items():
                m, _, _ = train(tr, grid, V, cfg)
                rows.append(MetricRow("ppca", label, size, tr.n,
                                      ppca_mean_rmse(m, tr), ppca_mean_rmse(m, test_set),
                                      *_recovery(m, truth),
                                      lambda_m=cfg.penalties.lambda_m,
                                      lambda_v=cfg.penalties.lambda_v))
    return rows

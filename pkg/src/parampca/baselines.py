"""PCA and independent per-bin PCA (IPCA) baselines."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, EmptyEndpointError, UsageError
from .initialize import fit_pca
from .model import BinGrid, Dataset, assign_bin, assign_bins


@dataclass(frozen=True, eq=False)
class GlobalPcaModel:
    """A single affine subspace; ignores the parameter."""

    mean: np.ndarray
    basis: np.ndarray  # (K, V), orthonormal columns (zero columns allowed)

    def mean_at(self, theta=None) -> np.ndarray:
        return self.mean

    def basis_at(self, theta=None) -> np.ndarray:
        return self.basis

    def project(self, x, theta=None) -> np.ndarray:
        return project_baseline(self, x, theta)


@dataclass(frozen=True, eq=False)
class IpcaModel:
    """One mean and orthonormal basis per bin, each fitted on that bin alone."""

    grid: BinGrid
    means: np.ndarray  # (B-1, K)
    bases: np.ndarray  # (B-1, K, V)

    def mean_at(self, theta) -> np.ndarray:
        return self.means[assign_bin(self.grid, theta)]

    def basis_at(self, theta) -> np.ndarray:
        return self.bases[assign_bin(self.grid, theta)]

    def project(self, x, theta) -> np.ndarray:
        return project_baseline(self, x, theta)


def fit_pca_global(dataset: Dataset, V: int) -> GlobalPcaModel:
    mean = dataset.X.mean(axis=0)
    return GlobalPcaModel(mean, fit_pca(dataset.X, mean, V))


def fit_ipca(dataset: Dataset, grid: BinGrid, V: int) -> IpcaModel:
    bins = assign_bins(grid, dataset.theta)
    means, bases = [], []
    for j in range(grid.n_bins):
        idx = np.flatnonzero(bins == j)
        if idx.size == 0:
            raise EmptyEndpointError(
                f"bin {j} [{float(grid.endpoints[j])!r}, {float(grid.endpoints[j + 1])!r}] has no observations"
            )
        sub = dataset.X[idx]
        mean = sub.mean(axis=0)
        with warnings.catch_warnings():
            # a bin with fewer than V+1 points cannot fill V directions; zero columns are fine here
            warnings.simplefilter("ignore")
            bases.append(fit_pca(sub, mean, V))
        means.append(mean)
    return IpcaModel(grid, np.array(means), np.array(bases))


def project_baseline(model, x, theta=None) -> np.ndarray:
    """Orthogonal projection of ``x`` onto the model's affine subspace at ``theta``."""
    if isinstance(model, IpcaModel) and theta is None:
        raise UsageError("IPCA projection needs a parameter value")
    x = np.asarray(x, dtype=float)
    mean = model.mean_at(theta)
    basis = model.basis_at(theta)
    if x.shape != mean.shape:
        raise DimensionError(f"x has shape {x.shape}, expected {mean.shape}")
    return mean + basis @ (basis.T @ (x - mean))

"""Bin grid, endpoint weights and the piecewise-linear forward model.

Indices are 0-based throughout: a grid with ``B`` endpoints has bins
``0 .. B-2`` and bin ``b`` spans ``[endpoints[b], endpoints[b+1]]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .errors import DimensionError, OutOfRangeError, UsageError


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BinGrid:
    """Ascending bin endpoints partitioning the admissible parameter range."""

    endpoints: np.ndarray

    def __post_init__(self):
        e = _frozen(self.endpoints)
        if e.ndim != 1 or e.size < 2:
            raise UsageError("a bin grid needs at least two endpoints")
        if not np.all(np.isfinite(e)):
            raise UsageError("bin endpoints must be finite")
        if np.any(np.diff(e) <= 0):
            raise UsageError(f"bin endpoints must be strictly increasing, got {e.tolist()}")
        object.__setattr__(self, "endpoints", e)

    @classmethod
    def equal(cls, lo: float, hi: float, n_bins: int) -> "BinGrid":
        if n_bins < 1:
            raise UsageError("n_bins must be >= 1")
        return cls(np.linspace(lo, hi, n_bins + 1))

    @property
    def n_endpoints(self) -> int:
        return self.endpoints.size

    @property
    def n_bins(self) -> int:
        return self.endpoints.size - 1

    @property
    def lo(self) -> float:
        return float(self.endpoints[0])

    @property
    def hi(self) -> float:
        return float(self.endpoints[-1])

    def check(self, theta) -> np.ndarray:
        t = np.asarray(theta, dtype=float)
        bad = ~((t >= self.lo) & (t <= self.hi))
        if np.any(bad):
            first = float(np.atleast_1d(t)[np.atleast_1d(bad)][0])
            raise OutOfRangeError(
                f"theta={first!r} lies outside the grid range [{self.lo!r}, {self.hi!r}]"
            )
        return t

    def __eq__(self, other):
        return isinstance(other, BinGrid) and np.array_equal(self.endpoints, other.endpoints)

    def __repr__(self):
        return f"BinGrid({self.endpoints.tolist()})"


class EndpointWeights(NamedTuple):
    lower: int
    upper: int
    w_lower: float
    w_upper: float


def assign_bins(grid: BinGrid, thetas) -> np.ndarray:
    """Vectorised :func:`assign_bin`."""
    t = grid.check(thetas)
    idx = np.searchsorted(grid.endpoints, t, side="left") - 1
    return np.clip(idx, 0, grid.n_bins - 1)


def assign_bin(grid: BinGrid, theta: float) -> int:
    """Index of the bin containing ``theta``.

    Values sitting exactly on an interior endpoint resolve to the bin on
    their left; the first endpoint belongs to bin 0.
    """
    return int(assign_bins(grid, np.atleast_1d(theta))[0])


def weight_arrays(grid: BinGrid, thetas):
    """Lower endpoint index and the two interpolation weights per theta."""
    t = grid.check(thetas)
    lower = assign_bins(grid, t)
    lo = grid.endpoints[lower]
    hi = grid.endpoints[lower + 1]
    w_upper = (t - lo) / (hi - lo)
    w_lower = 1.0 - w_upper
    return lower, w_lower, w_upper


def compute_weights(grid: BinGrid, theta: float) -> EndpointWeights:
    lower, wl, wu = weight_arrays(grid, np.atleast_1d(float(theta)))
    b = int(lower[0])
    return EndpointWeights(b, b + 1, float(wl[0]), float(wu[0]))


def weight_matrix(grid: BinGrid, thetas) -> np.ndarray:
    """Dense ``(n, B)`` matrix of endpoint weights; row i holds w_{b,i}."""
    lower, wl, wu = weight_arrays(grid, thetas)
    n = lower.size
    W = np.zeros((n, grid.n_endpoints))
    rows = np.arange(n)
    W[rows, lower] = wl
    W[rows, lower + 1] = wu
    return W


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` observations of dimension ``K`` paired with scalar parameters."""

    X: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        X = _frozen(self.X)
        t = _frozen(self.theta)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionError(f"observations must be a non-empty (n, K) array, got shape {X.shape}")
        if t.shape != (X.shape[0],):
            raise DimensionError(f"expected {X.shape[0]} parameter values, got shape {t.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(t))):
            raise UsageError("dataset contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "theta", t)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def K(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.theta[idx])

    def __len__(self):
        return self.n


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Per-observation coefficients, stored densely as ``(n, V)``.

    Slots that have no basis vector at an observation's parameter hold 0.
    ``rank_deficient[i]`` is set when observation i was solved with a
    minimum-norm least-squares fallback.
    """

    values: np.ndarray
    rank_deficient: Optional[np.ndarray] = None

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2:
            raise DimensionError("coefficients must be an (n, V) array")
        if not np.all(np.isfinite(v)):
            raise UsageError("coefficients must be finite")
        object.__setattr__(self, "values", v)
        flags = self.rank_deficient
        flags = np.zeros(v.shape[0], bool) if flags is None else np.asarray(flags, bool)
        flags = flags.copy()
        flags.setflags(write=False)
        object.__setattr__(self, "rank_deficient", flags)

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i):
        return self.values[i]


def as_coeff_array(coeffs) -> np.ndarray:
    if isinstance(coeffs, CoefficientSet):
        return coeffs.values
    return np.asarray(coeffs, dtype=float)


@dataclass(frozen=True, eq=False)
class PpcaModel:
    """Endpoint means and bases of a parameterized linear subspace model.

    ``bases`` has shape ``(B, K, V)``; column ``v`` of ``bases[b]`` is the
    basis vector p_{b,v}. Slots ``v >= counts[b]`` are zero placeholders.
    ``masks`` (optional, ``(B, K)`` bool) marks the active ambient entries at
    each endpoint; inactive entries of means and bases are exactly zero.
    """

    grid: BinGrid
    means: np.ndarray
    bases: np.ndarray
    counts: np.ndarray = None
    masks: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        means = _frozen(self.means)
        bases = _frozen(self.bases)
        B = self.grid.n_endpoints
        if means.ndim != 2 or means.shape[0] != B:
            raise DimensionError(f"means must have shape (B={B}, K), got {means.shape}")
        K = means.shape[1]
        if bases.ndim != 3 or bases.shape[:2] != (B, K):
            raise DimensionError(f"bases must have shape ({B}, {K}, V), got {bases.shape}")
        V = bases.shape[2]
        counts = np.full(B, V) if self.counts is None else np.array(self.counts, dtype=int)
        if counts.shape != (B,) or np.any(counts < 0) or np.any(counts > V):
            raise DimensionError(f"counts must be {B} integers in [0, {V}]")
        counts.setflags(write=False)
        slots = np.arange(V)[None, :] >= counts[:, None]
        if np.any(bases.transpose(0, 2, 1)[slots] != 0):
            raise UsageError("placeholder basis slots must be zero vectors")
        masks = self.masks
        if masks is not None:
            masks = _frozen(masks, dtype=bool)
            if masks.shape != (B, K):
                raise DimensionError(f"masks must have shape ({B}, {K}), got {masks.shape}")
            if np.any(means[~masks] != 0) or np.any(bases[~masks] != 0):
                raise UsageError("means and bases must be zero at masked-out entries")
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(bases))):
            raise UsageError("model contains non-finite values")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "masks", masks)

    @property
    def B(self) -> int:
        return self.grid.n_endpoints

    @property
    def K(self) -> int:
        return self.means.shape[1]

    @property
    def V(self) -> int:
        return self.bases.shape[2]

    def slot_mask(self) -> np.ndarray:
        """``(B, V)`` bool, True where the slot holds a real basis vector."""
        return np.arange(self.V)[None, :] < self.counts[:, None]

    def replace(self, **kw) -> "PpcaModel":
        return replace(self, **kw)

    def mean_at(self, theta: float) -> np.ndarray:
        return interpolate_mean(self, theta)

    def basis_at(self, theta: float) -> np.ndarray:
        return interpolate_basis(self, theta)


def interpolate_means(model: PpcaModel, thetas) -> np.ndarray:
    lower, wl, wu = weight_arrays(model.grid, thetas)
    return wl[:, None] * model.means[lower] + wu[:, None] * model.means[lower + 1]


def interpolate_bases(model: PpcaModel, thetas) -> np.ndarray:
    lower, wl, wu = weight_arrays(model.grid, thetas)
    return wl[:, None, None] * model.bases[lower] + wu[:, None, None] * model.bases[lower + 1]


def interpolate_mean(model: PpcaModel, theta: float) -> np.ndarray:
    """Mean vector at ``theta``: weighted blend of the two bracketing endpoint means."""
    return interpolate_means(model, np.atleast_1d(float(theta)))[0]


def interpolate_basis(model: PpcaModel, theta: float) -> np.ndarray:
    """``K x V`` basis at ``theta``.

    Placeholder columns blend as zero vectors, so a vector present at only
    one endpoint fades out linearly across the bin.
    """
    return interpolate_bases(model, np.atleast_1d(float(theta)))[0]


def active_entries(model: PpcaModel, thetas) -> Optional[np.ndarray]:
    """``(n, K)`` bool of entries active at some endpoint with positive weight.

    Returns None for unmasked models.
    """
    if model.masks is None:
        return None
    lower, wl, wu = weight_arrays(model.grid, thetas)
    return ((wl > 0)[:, None] & model.masks[lower]) | ((wu > 0)[:, None] & model.masks[lower + 1])


def active_columns(model: PpcaModel, thetas) -> np.ndarray:
    """``(n, V)`` bool of basis columns that are not identically zero at each theta."""
    lower, wl, wu = weight_arrays(model.grid, thetas)
    slots = model.slot_mask()
    return ((wl > 0)[:, None] & slots[lower]) | ((wu > 0)[:, None] & slots[lower + 1])


def reconstruct(model: PpcaModel, theta: float, beta, with_active: bool = False):
    """Return ``mu(theta) + P(theta) @ beta``.

    With ``with_active=True`` also returns the boolean active-entry vector
    (all True for unmasked models).
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (model.V,):
        raise DimensionError(f"beta must have length V={model.V}, got shape {beta.shape}")
    x = interpolate_mean(model, theta) + interpolate_basis(model, theta) @ beta
    if not with_active:
        return x
    act = active_entries(model, [theta])
    act = np.ones(model.K, bool) if act is None else act[0]
    return x, act

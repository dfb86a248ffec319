"""IPCA-style initialisation: weighted means, endpoint PCA and greedy basis reordering."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyEndpointError, RankDeficientWarning, ReorderError, UsageError
from .model import BinGrid, Dataset, PpcaModel, weight_arrays, weight_matrix

FORWARD = "forward"
BACKWARD = "backward"


@dataclass(frozen=True)
class InitConfig:
    weight_threshold: float = 0.001
    reorder_direction: str = FORWARD

    def __post_init__(self):
        if not 0 < self.weight_threshold < 1:
            raise UsageError("weight_threshold must lie in (0, 1)")
        if self.reorder_direction not in (FORWARD, BACKWARD):
            raise UsageError(f"reorder_direction must be {FORWARD!r} or {BACKWARD!r}")


def _entry_activity(dataset: Dataset, grid: BinGrid, masks) -> Optional[np.ndarray]:
    if masks is None:
        return None
    lower, wl, wu = weight_arrays(grid, dataset.theta)
    return ((wl > 0)[:, None] & masks[lower]) | ((wu > 0)[:, None] & masks[lower + 1])


def init_means(dataset: Dataset, grid: BinGrid, masks=None) -> np.ndarray:
    """Weighted average of the observations at every endpoint, shape (B, K).

    With masks, each entry averages only observations for which that entry
    is active, and masked-out entries are zero.
    """
    W = weight_matrix(grid, dataset.theta)
    total = W.sum(axis=0)
    empty = np.flatnonzero(total <= 0)
    if empty.size:
        raise EmptyEndpointError(
            f"endpoint {int(empty[0])} (theta={float(grid.endpoints[empty[0]])!r}) has zero total weight"
        )
    if masks is None:
        return (W.T @ dataset.X) / total[:, None]
    masks = np.asarray(masks, bool)
    act = _entry_activity(dataset, grid, masks).astype(float)
    num = W.T @ (dataset.X * act)
    den = W.T @ act
    means = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return np.where(masks, means, 0.0)


def select_endpoint_subset(dataset: Dataset, grid: BinGrid, b: int, eps: float = 0.001) -> np.ndarray:
    """Ascending indices of observations whose weight on endpoint ``b`` exceeds ``eps``."""
    W = weight_matrix(grid, dataset.theta)
    idx = np.flatnonzero(W[:, b] > eps)
    if idx.size == 0:
        raise EmptyEndpointError(f"no observation has weight above {eps} on endpoint {b}")
    return idx


def _sign_fix(vecs: np.ndarray) -> np.ndarray:
    # largest-magnitude entry positive; argmax picks the lowest index on ties
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def fit_pca(vectors, center, count: int, return_eigenvalues: bool = False):
    """Top principal directions of ``vectors`` about a fixed ``center``.

    Returns a ``(K, count)`` array of orthonormal columns in decreasing
    eigenvalue order. Uses the K x K covariance when K does not exceed the
    number of vectors and the m x m Gram matrix otherwise. If fewer than
    ``count`` directions carry variance, the remaining columns are zero and
    a :class:`RankDeficientWarning` is emitted.
    """
    Y = np.atleast_2d(np.asarray(vectors, dtype=float))
    m, K = Y.shape
    if m == 0:
        raise UsageError("fit_pca needs at least one vector")
    if count < 0 or count > K:
        raise UsageError(f"count must lie in [0, K={K}], got {count}")
    Y = Y - np.asarray(center, dtype=float)
    if K <= m:
        vals, vecs = np.linalg.eigh(Y.T @ Y / m)
        vals, vecs = vals[::-1], vecs[:, ::-1]
    else:
        vals, u = np.linalg.eigh(Y @ Y.T / m)
        vals, u = vals[::-1], u[:, ::-1]
        vecs = np.zeros((K, m))
        pos = vals > 0
        vecs[:, pos] = (Y.T @ u[:, pos]) / np.sqrt(m * vals[pos])
    tol = max(vals[0], 0.0) * max(m, K) * np.finfo(float).eps * 10
    rank = int(np.sum(vals > tol)) if vals[0] > 0 else 0
    keep = min(rank, count)
    out = np.zeros((K, count))
    if keep:
        out[:, :keep] = _sign_fix(vecs[:, :keep])
    if keep < count:
        warnings.warn(
            f"only {keep} of {count} requested principal directions carry variance; "
            "padding with zero vectors",
            RankDeficientWarning,
            stacklevel=2,
        )
    if return_eigenvalues:
        ev = np.zeros(count)
        ev[:keep] = vals[:keep]
        return out, ev
    return out


def _check_direction(counts: np.ndarray, direction: str):
    d = np.diff(counts)
    if direction == FORWARD and np.any(d < 0):
        if np.all(d <= 0):
            raise ReorderError(
                f"basis counts {counts.tolist()} decrease along the grid; use backward reordering"
            )
        raise ReorderError(f"basis counts {counts.tolist()} both rise and fall; cannot reorder")
    if direction == BACKWARD and np.any(d > 0):
        if np.all(d >= 0):
            raise ReorderError(
                f"basis counts {counts.tolist()} increase along the grid; use forward reordering"
            )
        raise ReorderError(f"basis counts {counts.tolist()} both rise and fall; cannot reorder")


def match_to_reference(reference: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Greedily permute and sign-flip the columns of ``target`` to follow ``reference``.

    Pairs are taken in order of decreasing |dot product| (ties: lowest
    reference index, then lowest target index). Unpaired target columns keep
    their relative order after the paired ones. A target with fewer columns
    than the reference (rank lost at initialisation) is packed in the order
    of the reference slots it matched.
    """
    n_ref, n_tgt = reference.shape[1], target.shape[1]
    dots = reference.T @ target
    score = np.abs(dots)
    out = np.zeros((target.shape[0], max(n_ref, n_tgt)))
    used = np.zeros(n_tgt, bool)
    filled = []
    for _ in range(min(n_ref, n_tgt)):
        r, t = np.unravel_index(np.argmax(score), score.shape)
        out[:, r] = -target[:, t] if dots[r, t] < 0 else target[:, t]
        used[t] = True
        filled.append(r)
        score[r, :] = -1.0
        score[:, t] = -1.0
    if n_tgt < n_ref:
        return out[:, sorted(filled)]
    out[:, n_ref:] = target[:, ~used]
    return out


def reorder_bases(bases: np.ndarray, counts=None, direction: str = FORWARD,
                  check: bool = True) -> np.ndarray:
    """Chain greedy matching along the endpoints, starting from the first
    (forward) or last (backward) endpoint's basis.

    ``check=False`` skips the direction rule; initialisation uses it after
    validating the requested counts, since lost rank may shrink a count.
    """
    bases = np.asarray(bases, dtype=float)
    B, K, V = bases.shape
    counts = np.full(B, V) if counts is None else np.asarray(counts, int)
    if check:
        _check_direction(counts, direction)
    out = bases.copy()
    order = range(1, B) if direction == FORWARD else range(B - 2, -1, -1)
    step = -1 if direction == FORWARD else 1
    for b in order:
        ref = out[b + step, :, : counts[b + step]]
        out[b, :, : counts[b]] = match_to_reference(ref, bases[b, :, : counts[b]])
    return out


def init_bases(dataset: Dataset, grid: BinGrid, means: np.ndarray, counts, masks=None,
               config: InitConfig = InitConfig()):
    """Per-endpoint PCA around the initial means, followed by reordering.

    Returns ``(bases, counts)``; counts shrink where an endpoint subset had
    too few independent directions.
    """
    B, K = means.shape
    counts = np.asarray(counts, int)
    _check_direction(counts, config.reorder_direction)
    V = int(counts.max()) if counts.size else 0
    act = _entry_activity(dataset, grid, masks)
    bases = np.zeros((B, K, V))
    achieved = counts.copy()
    for b in range(B):
        idx = select_endpoint_subset(dataset, grid, b, config.weight_threshold)
        vecs = dataset.X[idx]
        if masks is not None:
            keep = masks[b][None, :] & act[idx]
            vecs = np.where(keep, vecs, means[b])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            basis = fit_pca(vecs, means[b], int(counts[b]))
        if caught:
            achieved[b] = int(np.sum(np.any(basis != 0, axis=0)))
            warnings.warn(
                f"endpoint {b}: only {achieved[b]} of {counts[b]} basis vectors could be "
                "initialised; the rest are zero placeholders",
                RankDeficientWarning,
                stacklevel=2,
            )
        if masks is not None:
            basis = basis * masks[b][:, None]
        bases[b, :, : counts[b]] = basis
    bases = reorder_bases(bases, achieved, config.reorder_direction, check=False)
    return bases, achieved


def initialize_model(dataset: Dataset, grid: BinGrid, counts, masks=None,
                     config: InitConfig = InitConfig()) -> PpcaModel:
    grid.check(dataset.theta)
    counts = np.broadcast_to(np.asarray(counts, int), (grid.n_endpoints,)).copy()
    if masks is not None:
        masks = np.asarray(masks, bool)
    means = init_means(dataset, grid, masks)
    bases, counts = init_bases(dataset, grid, means, counts, masks, config)
    return PpcaModel(grid, means, bases, counts=counts, masks=masks)


def init_coefficients(model: PpcaModel, dataset: Dataset):
    from .optim import solve_coefficients

    return solve_coefficients(model, dataset)

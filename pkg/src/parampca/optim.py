"""Alternating minimisation of the PPCA energy.

Each training cycle updates the endpoint means (closed form or gradient
descent), then the endpoint bases (gradient descent followed by rescaling to
unit norm), then the per-observation coefficients (least squares). Training
stops at the first cycle whose energy exceeds its predecessor and returns the
previous cycle's estimates.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .energy import (
    EnergyBreakdown,
    Penalties,
    edge_masks,
    edge_slots,
    energy_total,
    residuals,
)
from .errors import (
    DegenerateBasisError,
    DivergenceError,
    RankDeficientWarning,
    SingularSystemError,
    UsageError,
)
from .initialize import InitConfig, initialize_model
from .model import (
    BinGrid,
    CoefficientSet,
    Dataset,
    PpcaModel,
    active_columns,
    active_entries,
    as_coeff_array,
    interpolate_bases,
    interpolate_means,
    weight_arrays,
    weight_matrix,
)
from .operators import apply_basis_smoothness, apply_mean_smoothness, ortho_gradient

try:
    from . import _kernels
except ImportError:  # pragma: no cover - numba missing
    _kernels = None

log = logging.getLogger(__name__)

CLOSED_FORM = "closed_form"
GRADIENT_DESCENT = "gradient_descent"


@dataclass(frozen=True)
class TrainConfig:
    penalties: Penalties = field(default_factory=Penalties)
    n_c: int = 100
    n_m: int = 100
    n_v: int = 100
    alpha_m: float = 1e-3
    alpha_v: float = 1e-3
    mean_solver: str = CLOSED_FORM
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("n_c", "n_m", "n_v"):
            if int(getattr(self, name)) < 1:
                raise UsageError(f"{name} must be >= 1")
        for name in ("alpha_m", "alpha_v"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise UsageError(f"{name} must be positive, got {v!r}")
        if self.mean_solver not in (CLOSED_FORM, GRADIENT_DESCENT):
            raise UsageError(f"mean_solver must be {CLOSED_FORM!r} or {GRADIENT_DESCENT!r}")


@dataclass
class TrainReport:
    energy_trace: List[EnergyBreakdown]
    cycles_run: int
    terminated_early: bool
    rolled_back: bool

    @property
    def final_energy(self) -> EnergyBreakdown:
        """Energy of the returned estimates."""
        return self.energy_trace[-2] if self.rolled_back else self.energy_trace[-1]


# -- gradients --------------------------------------------------------------


def grad_means(model: PpcaModel, dataset: Dataset, coeffs, penalties: Penalties) -> np.ndarray:
    """Derivative of the total energy with respect to the endpoint means, shape (B, K)."""
    r = residuals(model, dataset, coeffs)
    W = weight_matrix(model.grid, dataset.theta)
    g = -2.0 / dataset.n * (W.T @ r)
    g += 2.0 * penalties.lambda_m / (model.B - 1) * apply_mean_smoothness(model.means, edge_masks(model))
    if model.masks is not None:
        g *= model.masks
    return g


def grad_bases(model: PpcaModel, dataset: Dataset, coeffs, penalties: Penalties) -> np.ndarray:
    """Derivative of the total energy with respect to the endpoint bases, shape (B, K, V).

    Placeholder slots and masked-out entries get zero gradient.
    """
    beta = as_coeff_array(coeffs)
    r = residuals(model, dataset, coeffs)
    W = weight_matrix(model.grid, dataset.theta)
    g = -2.0 / dataset.n * np.einsum("nb,nk,nv->bkv", W, r, beta)
    g += (2.0 * penalties.lambda_v / (model.B - 1)) * apply_basis_smoothness(
        model.bases, edge_masks(model), edge_slots(model)
    )
    g += ortho_gradient(model.bases, model.slot_mask(), penalties.lambda_o)
    return g * _basis_support(model)


def _basis_support(model: PpcaModel) -> np.ndarray:
    s = model.slot_mask()[:, None, :].astype(float)
    if model.masks is not None:
        s = s * model.masks[:, :, None]
    return s


# -- means ------------------------------------------------------------------


def _target_minus_basis_part(model: PpcaModel, dataset: Dataset, beta: np.ndarray) -> np.ndarray:
    P = interpolate_bases(model, dataset.theta)
    return dataset.X - np.einsum("nkv,nv->nk", P, beta)


def solve_means_closed_form(model: PpcaModel, dataset: Dataset, coeffs, penalties: Penalties) -> np.ndarray:
    """Exact minimiser of the energy over the endpoint means, shape (B, K).

    The normal equations decouple across ambient coordinates, so this
    solves K systems of size B instead of one of size B*K.
    """
    beta = as_coeff_array(coeffs)
    B, K, n = model.B, model.K, dataset.n
    W = weight_matrix(model.grid, dataset.theta)
    T = _target_minus_basis_part(model, dataset, beta)
    c = penalties.lambda_m / (B - 1)
    e = edge_masks(model)  # (B-1, K)
    R = np.zeros((K, B, B))
    idx = np.arange(B - 1)
    R[:, idx, idx] += e.T
    R[:, idx + 1, idx + 1] += e.T
    R[:, idx, idx + 1] -= e.T
    R[:, idx + 1, idx] -= e.T
    act = active_entries(model, dataset.theta)
    if act is None:
        A = (W.T @ W / n)[None] + c * R
        rhs = (W.T @ T / n).T  # (K, B)
    else:
        a = act.astype(float)
        A = np.einsum("nb,nk,nc->kbc", W, a, W) / n + c * R
        rhs = (W.T @ (T * a) / n).T
        inactive = ~model.masks.T  # (K, B)
        kk, bb = np.nonzero(inactive)
        A[kk, bb, :] = 0.0
        A[kk, :, bb] = 0.0
        A[kk, bb, bb] = 1.0
        rhs[kk, bb] = 0.0
    cond = np.linalg.cond(A)
    if not np.all(np.isfinite(cond)) or np.max(cond) > 1e13:
        raise SingularSystemError(
            "the closed-form mean system is singular (some endpoint is unconstrained); "
            "use gradient descent for the means or set lambda_m > 0"
        )
    mu = np.linalg.solve(A, rhs[:, :, None])[:, :, 0].T
    if model.masks is not None:
        mu = np.where(model.masks, mu, 0.0)
    return mu


def descend_means(model: PpcaModel, dataset: Dataset, coeffs, penalties: Penalties,
                  alpha_m: float, n_m: int) -> np.ndarray:
    """``n_m`` fixed-step gradient descent updates of the endpoint means."""
    if not alpha_m > 0:
        raise UsageError("alpha_m must be positive")
    beta = as_coeff_array(coeffs)
    n = dataset.n
    W = weight_matrix(model.grid, dataset.theta)
    T = _target_minus_basis_part(model, dataset, beta)
    act = active_entries(model, dataset.theta)
    e = edge_masks(model)
    c = 2.0 * penalties.lambda_m / (model.B - 1)
    mu = np.array(model.means)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n_m):
            r = T - W @ mu
            if act is not None:
                r = np.where(act, r, 0.0)
            g = -2.0 / n * (W.T @ r) + c * apply_mean_smoothness(mu, e)
            if model.masks is not None:
                g *= model.masks
            mu -= alpha_m * g
            if not np.all(np.isfinite(mu)):
                raise DivergenceError(f"mean descent diverged with alpha_m={alpha_m!r}")
    return mu


# -- bases ------------------------------------------------------------------


class _BasisObjective:
    """Basis gradient with means and coefficients held fixed.

    Without masks the data term is quadratic in the bases, so its gradient
    reduces to a banded product with precomputed coefficient outer products.
    """

    def __init__(self, model: PpcaModel, dataset: Dataset, beta: np.ndarray, penalties: Penalties):
        self.n = dataset.n
        self.beta = beta
        self.W = weight_matrix(model.grid, dataset.theta)
        self.lower, self.wl, self.wu = weight_arrays(model.grid, dataset.theta)
        self.act = active_entries(model, dataset.theta)
        self.target = dataset.X - interpolate_means(model, dataset.theta)
        if self.act is None:
            W = self.W
            self.const = -2.0 / self.n * np.einsum("nb,nk,nv->bkv", W, self.target, beta)
            self.S0 = np.einsum("nb,nv,nw->bvw", W * W, beta, beta)
            self.S1 = np.einsum("nb,nv,nw->bvw", W[:, :-1] * W[:, 1:], beta, beta)
        self.c_smooth = 2.0 * penalties.lambda_v / (model.B - 1)
        self.edge_mask = edge_masks(model)
        self.edge_slot = edge_slots(model)
        self.lambda_o = penalties.lambda_o
        self.slots = model.slot_mask()
        self.support = _basis_support(model)

    def gradient(self, p: np.ndarray) -> np.ndarray:
        if self.act is None:
            q = p @ self.S0
            q[1:] += p[:-1] @ self.S1
            q[:-1] += p[1:] @ self.S1
            g = self.const + (2.0 / self.n) * q
        else:
            L = self.lower
            P = self.wl[:, None, None] * p[L] + self.wu[:, None, None] * p[L + 1]
            r = self.target - np.einsum("nkv,nv->nk", P, self.beta)
            r = np.where(self.act, r, 0.0)
            g = -2.0 / self.n * np.einsum("nb,nk,nv->bkv", self.W, r, self.beta)
        if self.c_smooth:
            g += self.c_smooth * apply_basis_smoothness(p, self.edge_mask, self.edge_slot)
        if self.lambda_o:
            g += ortho_gradient(p, self.slots, self.lambda_o)
        return g * self.support


def _renormalized(bases: np.ndarray, slots: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(bases, axis=1)  # (B, V)
    bad = slots & (norms < 1e-12)
    if np.any(bad):
        b, v = np.argwhere(bad)[0]
        raise DegenerateBasisError(f"basis vector p[{b},{v}] has (near) zero norm")
    scale = np.where(slots, norms, 1.0)
    return bases / scale[:, None, :]


def renormalize_bases(model: PpcaModel) -> PpcaModel:
    """Rescale every real basis vector to unit Euclidean norm."""
    return model.replace(bases=_renormalized(model.bases, model.slot_mask()))


def descend_bases(model: PpcaModel, dataset: Dataset, coeffs, penalties: Penalties,
                  alpha_v: float, n_v: int, compiled: bool = True) -> np.ndarray:
    """``n_v`` fixed-step gradient descent updates of the bases, then one rescale to unit norm.

    Unmasked models use a compiled loop unless ``compiled=False``.
    """
    if not alpha_v > 0:
        raise UsageError("alpha_v must be positive")
    obj = _BasisObjective(model, dataset, as_coeff_array(coeffs), penalties)
    p = np.array(model.bases)
    if compiled and obj.act is None and _kernels is not None:
        ok = _kernels.descend_unmasked(
            p, obj.const, obj.S0, obj.S1, obj.c_smooth, obj.edge_slot, float(obj.lambda_o),
            np.asarray(model.counts, np.int64), float(alpha_v), int(n_v), 2.0 / obj.n,
        )
        if not ok:
            raise DivergenceError(f"basis descent diverged with alpha_v={alpha_v!r}")
        return _renormalized(p, obj.slots)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n_v):
            p -= alpha_v * obj.gradient(p)
            if not np.all(np.isfinite(p)):
                raise DivergenceError(f"basis descent diverged with alpha_v={alpha_v!r}")
    return _renormalized(p, obj.slots)


# -- coefficients -------------------------------------------------------------


def solve_coefficients(model: PpcaModel, dataset: Dataset) -> CoefficientSet:
    """Least-squares coefficients of every observation under the model.

    Only active entries and non-vanishing basis columns take part; other
    coefficient slots are 0. Rank-deficient systems fall back to the
    minimum-norm solution and are flagged.
    """
    if dataset.K != model.K:
        raise UsageError(f"dataset has K={dataset.K} but the model has K={model.K}")
    n, K, V = dataset.n, model.K, model.V
    if V == 0:
        return CoefficientSet(np.zeros((n, 0)))
    P = interpolate_bases(model, dataset.theta)
    t = dataset.X - interpolate_means(model, dataset.theta)
    cols = active_columns(model, dataset.theta)
    A = P * cols[:, None, :]
    rows = active_entries(model, dataset.theta)
    if rows is not None:
        A = A * rows[:, :, None]
        t = np.where(rows, t, 0.0)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    tol = s[:, :1] * max(K, V) * np.finfo(float).eps
    keep = s > tol
    inv = np.divide(1.0, s, out=np.zeros_like(s), where=keep)
    beta = np.einsum("nvj,nj,nkj,nk->nv", Vt.transpose(0, 2, 1), inv, U, t)
    beta = np.where(cols, beta, 0.0)
    deficient = keep.sum(axis=1) < cols.sum(axis=1)
    if np.any(deficient):
        warnings.warn(
            f"{int(deficient.sum())} observation(s) have a rank-deficient basis; "
            "using minimum-norm coefficients",
            RankDeficientWarning,
            stacklevel=2,
        )
    return CoefficientSet(beta, deficient)


# -- driver -------------------------------------------------------------------


def train(dataset: Dataset, grid: BinGrid, counts, config: TrainConfig, masks=None,
          init_config: Optional[InitConfig] = None, init_model: Optional[PpcaModel] = None):
    """Fit a PPCA model; returns ``(model, coefficients, report)``.

    ``counts`` is a single basis count or one per endpoint. The energy trace
    holds E_0 .. E_c; after a rollback its last entry is the rejected cycle's
    energy and the returned estimates are those behind ``trace[-2]``.
    """
    grid.check(dataset.theta)
    if init_model is None:
        model = initialize_model(dataset, grid, counts, masks, init_config or InitConfig())
    else:
        model = init_model
    pen = config.penalties
    coeffs = solve_coefficients(model, dataset)
    trace = [energy_total(model, dataset, coeffs, pen)]
    rolled_back = False
    c = 0
    for c in range(1, config.n_c + 1):
        previous = (model, coeffs)
        if config.mean_solver == CLOSED_FORM:
            means = solve_means_closed_form(model, dataset, coeffs, pen)
        else:
            means = descend_means(model, dataset, coeffs, pen, config.alpha_m, config.n_m)
        model = model.replace(means=means)
        bases = descend_bases(model, dataset, coeffs, pen, config.alpha_v, config.n_v)
        model = model.replace(bases=bases)
        coeffs = solve_coefficients(model, dataset)
        energy = energy_total(model, dataset, coeffs, pen)
        trace.append(energy)
        if not np.isfinite(energy.total):
            raise DivergenceError(f"energy became non-finite in cycle {c}")
        if energy.total > trace[-2].total:
            model, coeffs = previous
            rolled_back = True
            log.debug("energy rose in cycle %d (%.17g > %.17g); rolled back", c, energy.total, trace[-2].total)
            break
    report = TrainReport(trace, cycles_run=c, terminated_early=c < config.n_c or rolled_back,
                         rolled_back=rolled_back)
    return model, coeffs, report

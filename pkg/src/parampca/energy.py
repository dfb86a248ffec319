"""Energy terms: data fidelity, endpoint smoothness and basis orthonormality."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, UsageError
from .model import (
    Dataset,
    PpcaModel,
    active_entries,
    as_coeff_array,
    interpolate_bases,
    interpolate_means,
)


@dataclass(frozen=True)
class Penalties:
    lambda_m: float = 0.0
    lambda_v: float = 0.0
    lambda_o: float = 0.0

    def __post_init__(self):
        for name in ("lambda_m", "lambda_v", "lambda_o"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise UsageError(f"{name} must be a finite non-negative number, got {v!r}")


@dataclass(frozen=True)
class EnergyBreakdown:
    data: float
    smoothness: float
    ortho: float

    @property
    def total(self) -> float:
        return self.data + self.smoothness + self.ortho

    def as_dict(self) -> dict:
        return {
            "data": self.data,
            "smoothness": self.smoothness,
            "ortho": self.ortho,
            "total": self.total,
        }


def _check_aligned(model: PpcaModel, dataset: Dataset, beta: np.ndarray):
    if dataset.K != model.K:
        raise DimensionError(f"dataset has K={dataset.K} but the model has K={model.K}")
    if beta.shape != (dataset.n, model.V):
        raise DimensionError(
            f"coefficients must have shape ({dataset.n}, {model.V}), got {beta.shape}"
        )


def residuals(model: PpcaModel, dataset: Dataset, coeffs) -> np.ndarray:
    """``x_i - mu(theta_i) - P(theta_i) beta_i``, zeroed at inactive entries."""
    beta = as_coeff_array(coeffs)
    _check_aligned(model, dataset, beta)
    mu = interpolate_means(model, dataset.theta)
    P = interpolate_bases(model, dataset.theta)
    r = dataset.X - mu - np.einsum("nkv,nv->nk", P, beta)
    act = active_entries(model, dataset.theta)
    if act is not None:
        r = np.where(act, r, 0.0)
    return r


def energy_data(model: PpcaModel, dataset: Dataset, coeffs) -> float:
    """Mean squared reconstruction error over the observations."""
    r = residuals(model, dataset, coeffs)
    return float(np.sum(r * r) / dataset.n)


def edge_masks(model: PpcaModel) -> np.ndarray:
    """``(B-1, K)`` float: entries active at both ends of each bin."""
    if model.masks is None:
        return np.ones((model.B - 1, model.K))
    return (model.masks[:-1] & model.masks[1:]).astype(float)


def edge_slots(model: PpcaModel) -> np.ndarray:
    """``(B-1, V)`` float: slots v < min(V_b, V_{b+1})."""
    c = np.minimum(model.counts[:-1], model.counts[1:])
    return (np.arange(model.V)[None, :] < c[:, None]).astype(float)


def energy_smoothness(model: PpcaModel, penalties: Penalties) -> float:
    B = model.B
    m2 = edge_masks(model)
    dmu = (model.means[:-1] - model.means[1:]) * m2
    dp = (model.bases[:-1] - model.bases[1:]) * m2[:, :, None] * edge_slots(model)[:, None, :]
    return float(
        penalties.lambda_m / (B - 1) * np.sum(dmu * dmu)
        + penalties.lambda_v / (B - 1) * np.sum(dp * dp)
    )


def gram_deviation(model: PpcaModel) -> np.ndarray:
    """``(B, V, V)`` Gram matrix minus identity, zero outside real slots."""
    G = np.einsum("bkv,bkw->bvw", model.bases, model.bases) - np.eye(model.V)
    s = model.slot_mask().astype(float)
    return G * s[:, :, None] * s[:, None, :]


def energy_ortho(model: PpcaModel, penalties: Penalties) -> float:
    D = gram_deviation(model)
    # sum over v <= w: off-diagonal pairs counted once
    upper = np.triu(np.ones((model.V, model.V)))
    return float(penalties.lambda_o * np.sum(D * D * upper))


def energy_total(model: PpcaModel, dataset: Dataset, coeffs, penalties: Penalties) -> EnergyBreakdown:
    return EnergyBreakdown(
        data=energy_data(model, dataset, coeffs),
        smoothness=energy_smoothness(model, penalties),
        ortho=energy_ortho(model, penalties),
    )

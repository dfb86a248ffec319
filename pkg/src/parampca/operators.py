"""Structured operators behind the mean and basis gradients.

The training code never builds the block matrices explicitly: the weight
operators touch only the two endpoints bracketing each observation and the
smoothness operators are tridiagonal block stencils. The ``dense_*``
builders materialise the same operators for small problems so the implicit
versions can be checked against them.

Stacking conventions: the stacked mean vector is ``means.reshape(-1)``
(endpoint-major), the stacked basis vector orders ``p_{1,1}, ..., p_{1,V},
p_{2,1}, ...``, i.e. ``bases.transpose(0, 2, 1).reshape(-1)``.
"""

from __future__ import annotations

import numpy as np


def stack_bases(bases: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(bases.transpose(0, 2, 1)).reshape(-1)


def unstack_bases(p: np.ndarray, B: int, K: int, V: int) -> np.ndarray:
    return p.reshape(B, V, K).transpose(0, 2, 1).copy()


# -- implicit application -------------------------------------------------


def apply_mean_smoothness(means: np.ndarray, edge_mask: np.ndarray) -> np.ndarray:
    """``R_(M) @ mu`` for (optionally masked) endpoint means of shape (B, K)."""
    d = (means[:-1] - means[1:]) * edge_mask
    out = np.zeros_like(means)
    out[:-1] += d
    out[1:] -= d
    return out


def apply_basis_smoothness(bases: np.ndarray, edge_mask: np.ndarray, edge_slot: np.ndarray) -> np.ndarray:
    """``R_(V) @ p`` for bases of shape (B, K, V).

    ``edge_slot[b, v]`` restricts bin b's coupling to slots present at both
    of its endpoints.
    """
    d = (bases[:-1] - bases[1:]) * edge_mask[:, :, None] * edge_slot[:, None, :]
    out = np.zeros_like(bases)
    out[:-1] += d
    out[1:] -= d
    return out


def apply_weight(w_row: np.ndarray, stacked: np.ndarray) -> np.ndarray:
    """``W_i @ v`` where ``stacked`` has one K-block per endpoint, shape (B, K)."""
    return w_row @ stacked


def apply_weight_transpose(w_row: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``W_i.T @ x``, returned with shape (B, K)."""
    return np.outer(w_row, x)


def apply_weight_product(w_row: np.ndarray, stacked: np.ndarray) -> np.ndarray:
    """``C_(M),i @ v`` with ``C_(M),i = W_i.T W_i``, shape (B, K)."""
    return np.outer(w_row, w_row @ stacked)


def apply_coefficients(beta_i: np.ndarray, bases: np.ndarray) -> np.ndarray:
    """``B_i @ p``: every endpoint's basis times beta_i, shape (B, K)."""
    return bases @ beta_i


def weighted_residual_vector(w_row: np.ndarray, beta_i: np.ndarray, r: np.ndarray) -> np.ndarray:
    """The vector b_i, returned as (B, K, V) with entry w_b * beta_v * r."""
    return w_row[:, None, None] * r[None, :, None] * beta_i[None, None, :]


def ortho_gradient(bases: np.ndarray, slot_mask: np.ndarray, lambda_o: float) -> np.ndarray:
    """Gradient of the orthonormality penalty with respect to the bases.

    With ``D = P_b^T P_b - I`` restricted to real slots, the penalty over
    pairs v <= w differentiates to ``2 lambda_o P_b (D + diag(D))``.
    """
    s = slot_mask.astype(float)
    D = np.einsum("bkv,bkw->bvw", bases, bases) - np.eye(bases.shape[2])
    D *= s[:, :, None] * s[:, None, :]
    D = D + D * np.eye(bases.shape[2])
    return 2.0 * lambda_o * np.einsum("bkw,bwv->bkv", bases, D)


# -- dense constructions (small problems only) ----------------------------


def dense_weight_matrix(w_row: np.ndarray, K: int) -> np.ndarray:
    """W_i = [w_1 I, w_2 I, ..., w_B I], shape (K, B*K)."""
    return np.kron(w_row[None, :], np.eye(K))


def dense_weight_product(w_row: np.ndarray, K: int) -> np.ndarray:
    """C_(M),i, shape (B*K, B*K)."""
    return np.kron(np.outer(w_row, w_row), np.eye(K))


def dense_mask(mask_b: np.ndarray) -> np.ndarray:
    """M_(1),b = diag(m_b)."""
    return np.diag(np.asarray(mask_b, dtype=float))


def dense_mask_repeated(mask_b: np.ndarray, V: int, slots=None) -> np.ndarray:
    """M_(R1),b: V diagonal copies of M_(1),b.

    ``slots`` (length V, optional) zeroes whole blocks, which is how the
    varied basis-count restriction is folded into the basis stencil.
    """
    s = np.ones(V) if slots is None else np.asarray(slots, dtype=float)
    return np.kron(np.diag(s), dense_mask(mask_b))


def _tridiagonal_blocks(blocks):
    """Assemble the block stencil [[M1, -M1], [-M1, M1 + M2, -M2], ...]."""
    nb = len(blocks) + 1
    size = blocks[0].shape[0]
    R = np.zeros((nb * size, nb * size))
    for b, M in enumerate(blocks):
        i, j = slice(b * size, (b + 1) * size), slice((b + 1) * size, (b + 2) * size)
        R[i, i] += M
        R[j, j] += M
        R[i, j] -= M
        R[j, i] -= M
    return R


def dense_mean_smoothness(B: int, K: int, masks=None) -> np.ndarray:
    """R_(M), shape (B*K, B*K); masked variant uses M_(2),b = M_(1),b M_(1),b+1."""
    if masks is None:
        masks = np.ones((B, K))
    blocks = [dense_mask(masks[b]) @ dense_mask(masks[b + 1]) for b in range(B - 1)]
    return _tridiagonal_blocks(blocks)


def dense_basis_smoothness(B: int, K: int, V: int, masks=None, counts=None) -> np.ndarray:
    """R_(V), shape (B*K*V, B*K*V); masked and varied-count aware."""
    if masks is None:
        masks = np.ones((B, K))
    if counts is None:
        counts = np.full(B, V)
    blocks = []
    for b in range(B - 1):
        slots = np.arange(V) < min(counts[b], counts[b + 1])
        blocks.append(
            dense_mask_repeated(masks[b], V, slots) @ dense_mask_repeated(masks[b + 1], V, slots)
        )
    return _tridiagonal_blocks(blocks)


def dense_coefficient_block(beta_i: np.ndarray, K: int) -> np.ndarray:
    """B_(B),i = [beta_1 I, ..., beta_V I], shape (K, K*V)."""
    return np.kron(beta_i[None, :], np.eye(K))


def dense_coefficient_matrix(beta_i: np.ndarray, B: int, K: int) -> np.ndarray:
    """B_i: block-diagonal repetition of B_(B),i, shape (B*K, B*K*V)."""
    return np.kron(np.eye(B), dense_coefficient_block(beta_i, K))


def stacked_observation(x: np.ndarray, B: int) -> np.ndarray:
    """y_i: B stacked copies of x_i."""
    return np.tile(x, B)


def dense_residual_vector(w_row: np.ndarray, beta_i: np.ndarray, r: np.ndarray) -> np.ndarray:
    """b_i in stacked order, length B*K*V."""
    return np.concatenate([w * bv * r for w in w_row for bv in beta_i])


def dense_transition(b: int, v: int, w: int, B: int, K: int, V: int) -> np.ndarray:
    """T_{b,v,w}: moves p_{b,w} into the slot of p_{b,v}, zeroing the rest."""
    T = np.zeros((B * V * K, B * V * K))
    row = (b * V + v) * K
    col = (b * V + w) * K
    T[row : row + K, col : col + K] = np.eye(K)
    return T

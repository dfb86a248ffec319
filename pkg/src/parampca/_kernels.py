"""Compiled inner loop for unmasked basis descent.

Mirrors ``optim._BasisObjective.gradient`` for models without masks; the
test suite checks the two agree.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def descend_unmasked(p, const, S0, S1, c_smooth, edge_slot, lambda_o, counts, alpha, n_steps, data_scale):
    B, K, V = p.shape
    g = np.empty_like(p)
    D = np.empty((V, V))
    for _ in range(n_steps):
        for b in range(B):
            for k in range(K):
                for w in range(V):
                    s = 0.0
                    for v in range(V):
                        s += p[b, k, v] * S0[b, v, w]
                        if b > 0:
                            s += p[b - 1, k, v] * S1[b - 1, v, w]
                        if b < B - 1:
                            s += p[b + 1, k, v] * S1[b, v, w]
                    g[b, k, w] = const[b, k, w] + data_scale * s
        if c_smooth != 0.0:
            for b in range(B - 1):
                for v in range(V):
                    if edge_slot[b, v] != 0.0:
                        for k in range(K):
                            d = c_smooth * (p[b, k, v] - p[b + 1, k, v])
                            g[b, k, v] += d
                            g[b + 1, k, v] -= d
        for b in range(B):
            cnt = counts[b]
            if lambda_o != 0.0:
                for v in range(cnt):
                    for w in range(cnt):
                        s = 0.0
                        for k in range(K):
                            s += p[b, k, v] * p[b, k, w]
                        if v == w:
                            D[v, w] = 2.0 * (s - 1.0)
                        else:
                            D[v, w] = s
                for k in range(K):
                    for v in range(cnt):
                        s = 0.0
                        for w in range(cnt):
                            s += p[b, k, w] * D[w, v]
                        g[b, k, v] += 2.0 * lambda_o * s
            for k in range(K):
                for v in range(cnt, V):
                    g[b, k, v] = 0.0
        finite = True
        for b in range(B):
            for k in range(K):
                for v in range(V):
                    p[b, k, v] -= alpha * g[b, k, v]
                    if not np.isfinite(p[b, k, v]):
                        finite = False
        if not finite:
            return False
    return True

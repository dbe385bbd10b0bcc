"""Fused elementwise tanh jet rules (forward and reverse).

Arrays are laid out ``(K, N, W)``: channel, point, neuron.  With
``t = tanh(z)`` the derivatives used are ``t' = 1 - t^2``,
``t'' = -2 t t'`` and ``t''' = -2 t' (1 - 3 t^2)``.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def tanh_jet_forward(Z, T, n_first, tq, ta, tb, tc, O):
    K, N, W = Z.shape
    base = 1 + n_first
    n_terms = tq.shape[0]
    a1 = np.empty(W)
    a2 = np.empty(W)
    for n in range(N):
        for j in range(W):
            t = T[n, j]
            a1[j] = 1.0 - t * t
            a2[j] = -2.0 * t * a1[j]
            O[0, n, j] = t
        for c in range(1, K):
            for j in range(W):
                O[c, n, j] = a1[j] * Z[c, n, j]
        for e in range(n_terms):
            q = base + tq[e]
            ia = 1 + ta[e]
            ib = 1 + tb[e]
            coef = tc[e]
            for j in range(W):
                O[q, n, j] += coef * a2[j] * Z[ia, n, j] * Z[ib, n, j]


@numba.njit(cache=True)
def tanh_jet_backward(Z, T, Ob, n_first, tq, ta, tb, tc, Zb):
    K, N, W = Z.shape
    base = 1 + n_first
    n_terms = tq.shape[0]
    a1 = np.empty(W)
    a2 = np.empty(W)
    a3 = np.empty(W)
    zb0 = np.empty(W)
    for n in range(N):
        for j in range(W):
            t = T[n, j]
            a1[j] = 1.0 - t * t
            a2[j] = -2.0 * t * a1[j]
            a3[j] = -2.0 * a1[j] * (1.0 - 3.0 * t * t)
            zb0[j] = Ob[0, n, j] * a1[j]
        for c in range(1, K):
            for j in range(W):
                zb0[j] += Ob[c, n, j] * a2[j] * Z[c, n, j]
                Zb[c, n, j] = Ob[c, n, j] * a1[j]
        for e in range(n_terms):
            q = base + tq[e]
            ia = 1 + ta[e]
            ib = 1 + tb[e]
            coef = tc[e]
            for j in range(W):
                ob = Ob[q, n, j] * coef
                ga = Z[ia, n, j]
                gb = Z[ib, n, j]
                zb0[j] += ob * a3[j] * ga * gb
                Zb[ia, n, j] += ob * a2[j] * gb
                Zb[ib, n, j] += ob * a2[j] * ga
        for j in range(W):
            Zb[0, n, j] = zb0[j]


def warmup():
    """Trigger compilation (cached on disk after the first run)."""
    Z = np.zeros((3, 1, 1))
    T = np.zeros((1, 1))
    idx = np.zeros(1, dtype=np.int64)
    coef = np.ones(1)
    O = np.empty_like(Z)
    tanh_jet_forward(Z, T, 1, idx, idx, idx, coef, O)
    tanh_jet_backward(Z, T, Z, 1, idx, idx, idx, coef, O)

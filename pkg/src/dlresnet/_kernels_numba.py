"""Numba kernels: explicit loops, no allocation inside the step loop.

Same contracts as ``_kernels_numpy``.  Fastest for the small widths used by
the SGD experiments, where per-call overhead of BLAS dominates.
"""

import numpy as np
from numba import njit

RUNNING, EARLY_STOP, DIVERGED = 0, 1, 2


@njit(cache=True)
def _prefix_into(W, A, residual, P):
    L, m, _ = W.shape
    d = A.shape[1]
    P[0, :, :] = A
    for l in range(L):
        for i in range(m):
            for c in range(d):
                acc = 0.0
                for j in range(m):
                    acc += W[l, i, j] * P[l, j, c]
                if residual:
                    acc += P[l, i, c]
                P[l + 1, i, c] = acc


@njit(cache=True)
def _grads_into(W, B, P, M, residual, S, S2, Q, G):
    L, m, _ = W.shape
    k, d = M.shape
    S[:, :] = B
    for l in range(L - 1, -1, -1):
        # Q = M @ P[l].T
        for a in range(k):
            for i in range(m):
                acc = 0.0
                for c in range(d):
                    acc += M[a, c] * P[l, i, c]
                Q[a, i] = acc
        # G[l] = S.T @ Q
        for i in range(m):
            for j in range(m):
                G[l, i, j] = 0.0
        for a in range(k):
            for i in range(m):
                s = S[a, i]
                if s != 0.0:
                    for j in range(m):
                        G[l, i, j] += s * Q[a, j]
        if l == 0:
            break
        # S <- S (I + W[l])  or  S W[l]
        for a in range(k):
            for j in range(m):
                S2[a, j] = S[a, j] if residual else 0.0
            for i in range(m):
                s = S[a, i]
                if s != 0.0:
                    for j in range(m):
                        S2[a, j] += s * W[l, i, j]
        S[:, :] = S2


@njit(cache=True)
def _gram_loss(U, gram):
    # gram = (X X^T, Y X^T, 0.5 ||Y||_F^2)
    Gxx, Cyx, half_yy = gram
    k, d = U.shape
    quad = 0.0
    lin = 0.0
    for a in range(k):
        for c in range(d):
            acc = 0.0
            for e in range(d):
                acc += U[a, e] * Gxx[e, c]
            quad += acc * U[a, c]
            lin += U[a, c] * Cyx[a, c]
    return half_yy - lin + 0.5 * quad


@njit(cache=True)
def prefix_products(W, A, residual):
    P = np.empty((W.shape[0] + 1, A.shape[0], A.shape[1]))
    _prefix_into(W, A, residual, P)
    return P


@njit(cache=True)
def layer_grads(W, B, P, M, residual):
    L, m, _ = W.shape
    k = B.shape[0]
    G = np.empty((L, m, m))
    _grads_into(W, B, P, M, residual, np.empty((k, m)), np.empty((k, m)),
                np.empty((k, m)), G)
    return G


@njit(cache=True)
def _draw_batch_into(uniform_row, perm, idx):
    n = perm.shape[0]
    size = uniform_row.shape[0]
    for b in range(size):
        j = b + int(uniform_row[b] * (n - b))
        if j >= n:
            j = n - 1
        tmp = perm[b]
        perm[b] = perm[j]
        perm[j] = tmp
    # insertion sort of the (short) batch
    for b in range(size):
        v = perm[b]
        c = b
        while c > 0 and idx[c - 1] > v:
            idx[c] = idx[c - 1]
            c -= 1
        idx[c] = v


@njit(cache=True)
def draw_batch(uniform_row, perm):
    idx = np.empty(uniform_row.shape[0], dtype=perm.dtype)
    _draw_batch_into(uniform_row, perm, idx)
    return idx


@njit(cache=True)
def train_steps(W, A, B, X, Y, gram, eta, scale, residual, batch_size, uniforms,
                perm, stop_loss, div_loss, out):
    L, m, _ = W.shape
    d = A.shape[1]
    k, n = Y.shape
    T = out.shape[0]
    full = batch_size == n
    P = np.empty((L + 1, m, d))
    U = np.empty((k, d))
    R = np.empty((k, n))
    M = np.empty((k, d))
    S = np.empty((k, m))
    S2 = np.empty((k, m))
    Q = np.empty((k, m))
    G = np.empty((L, m, m))
    idx = np.empty(batch_size, dtype=perm.dtype)
    for t in range(T):
        _prefix_into(W, A, residual, P)
        for a in range(k):
            for c in range(d):
                acc = 0.0
                for i in range(m):
                    acc += B[a, i] * P[L, i, c]
                U[a, c] = acc
        if full:
            loss = 0.0
            for a in range(k):
                for i in range(n):
                    acc = 0.0
                    for c in range(d):
                        acc += U[a, c] * X[c, i]
                    r = acc - Y[a, i]
                    R[a, i] = r
                    loss += r * r
            loss *= 0.5
        else:
            loss = _gram_loss(U, gram)
        wmax = 0.0
        for l in range(L):
            acc = 0.0
            for i in range(m):
                for j in range(m):
                    acc += W[l, i, j] * W[l, i, j]
            if acc > wmax:
                wmax = acc
        out[t, 0] = loss
        out[t, 1] = np.sqrt(wmax)
        if not np.isfinite(loss) or loss > div_loss:
            out[t, 2:] = np.nan
            return t + 1, DIVERGED
        if loss <= stop_loss:
            out[t, 2:] = np.nan
            return t + 1, EARLY_STOP
        M[:, :] = 0.0
        if full:
            for a in range(k):
                for c in range(d):
                    acc = 0.0
                    for i in range(n):
                        acc += R[a, i] * X[c, i]
                    M[a, c] = acc
        else:
            _draw_batch_into(uniforms[t], perm, idx)
            for b in range(batch_size):
                i = idx[b]
                for a in range(k):
                    acc = 0.0
                    for c in range(d):
                        acc += U[a, c] * X[c, i]
                    R[a, b] = acc - Y[a, i]
            for a in range(k):
                for c in range(d):
                    acc = 0.0
                    for b in range(batch_size):
                        acc += R[a, b] * X[c, idx[b]]
                    M[a, c] = acc
        if scale != 1.0:
            for a in range(k):
                for c in range(d):
                    M[a, c] *= scale
        _grads_into(W, B, P, M, residual, S, S2, Q, G)
        gsum = 0.0
        gmin = np.inf
        gmax = 0.0
        for l in range(L):
            acc = 0.0
            for i in range(m):
                for j in range(m):
                    acc += G[l, i, j] * G[l, i, j]
            gsum += acc
            gmin = min(gmin, acc)
            gmax = max(gmax, acc)
        out[t, 2] = gsum
        out[t, 3] = gmin
        out[t, 4] = gmax
        for l in range(L):
            for i in range(m):
                for j in range(m):
                    W[l, i, j] -= eta * G[l, i, j]
    return T, RUNNING

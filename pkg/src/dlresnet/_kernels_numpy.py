"""Pure-numpy kernels (reference path and fallback when numba is off)."""

import numpy as np

RUNNING, EARLY_STOP, DIVERGED = 0, 1, 2


def prefix_products(W, A, residual):
    L = W.shape[0]
    P = np.empty((L + 1,) + A.shape)
    P[0] = A
    for l in range(L):
        if residual:
            P[l + 1] = P[l] + W[l] @ P[l]
        else:
            P[l + 1] = W[l] @ P[l]
    return P


def layer_grads(W, B, P, M, residual):
    L, m, _ = W.shape
    G = np.empty((L, m, m))
    S = B
    for l in range(L - 1, -1, -1):
        G[l] = S.T @ (M @ P[l].T)
        if residual:
            S = S + S @ W[l]
        else:
            S = S @ W[l]
    return G


def draw_batch(uniform_row, perm):
    n = perm.shape[0]
    size = uniform_row.shape[0]
    for b in range(size):
        j = b + int(uniform_row[b] * (n - b))
        if j >= n:
            j = n - 1
        perm[b], perm[j] = perm[j], perm[b]
    return np.sort(perm[:size])


def gram_loss(U, gram):
    Gxx, Cyx, half_yy = gram
    return half_yy - np.sum(U * Cyx) + 0.5 * np.sum((U @ Gxx) * U)


def train_steps(W, A, B, X, Y, gram, eta, scale, residual, batch_size, uniforms,
                perm, stop_loss, div_loss, out):
    n = X.shape[1]
    T = out.shape[0]
    full = batch_size == n
    for t in range(T):
        P = prefix_products(W, A, residual)
        U = B @ P[-1]
        if full:
            R = U @ X - Y
            loss = 0.5 * np.sum(R * R)
        else:
            loss = gram_loss(U, gram)
        out[t, 0] = loss
        out[t, 1] = np.sqrt(np.max(np.einsum("lij,lij->l", W, W)))
        if not np.isfinite(loss) or loss > div_loss:
            out[t, 2:] = np.nan
            return t + 1, DIVERGED
        if loss <= stop_loss:
            out[t, 2:] = np.nan
            return t + 1, EARLY_STOP
        if full:
            M = R @ X.T
        else:
            idx = draw_batch(uniforms[t], perm)
            Xb = X[:, idx]
            M = (U @ Xb - Y[:, idx]) @ Xb.T
        if scale != 1.0:
            M = scale * M
        G = layer_grads(W, B, P, M, residual)
        g2 = np.einsum("lij,lij->l", G, G)
        out[t, 2] = np.sum(g2)
        out[t, 3] = np.min(g2)
        out[t, 4] = np.max(g2)
        W -= eta * G
    return T, RUNNING

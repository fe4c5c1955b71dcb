"""Analytic layer gradients and a central-difference oracle.

For layer ``l`` the gradient of ``L(W) = 0.5 ||U X - Y||_F^2`` is

    suffix_l^T (U X - Y) (prefix_l X)^T  =  suffix_l^T [(U X - Y) X^T] prefix_l^T

and the bracket is shared by all layers, so the kernels only ever form
``k x d`` and ``m x d`` intermediates.
"""

from dataclasses import dataclass

import numpy as np

from . import _accel
from .model import loss as model_loss

__all__ = [
    "GradientSet",
    "full_gradient",
    "example_gradient",
    "minibatch_gradient",
    "fd_gradient",
]


@dataclass(frozen=True, eq=False)
class GradientSet:
    grads: np.ndarray  # (L, m, m)
    tag: str = "full"

    def __len__(self):
        return self.grads.shape[0]

    def __getitem__(self, l):
        return self.grads[l]

    def sq_norms(self):
        return np.einsum("lij,lij->l", self.grads, self.grads)


def _grads_from_residual_moment(p, M, residual=True, backend=None):
    kern = _accel.kernels(p.m, backend)
    P = kern.prefix_products(p.W, np.ascontiguousarray(p.A), residual)
    return kern.layer_grads(p.W, np.ascontiguousarray(p.B), P,
                            np.ascontiguousarray(M), residual)


def _end_to_end(p, residual):
    kern = _accel.kernels(p.m)
    P = kern.prefix_products(p.W, np.ascontiguousarray(p.A), residual)
    return p.B @ P[-1]


def full_gradient(p, data, residual=True, backend=None):
    """Exact gradient of the training loss for every hidden layer.

    ``residual=False`` differentiates the skip-free product ``B W_L ... W_1 A``
    instead (used for the standard linear baseline).
    """
    if data.d != p.d or data.k != p.k:
        raise ValueError(f"data is (d={data.d}, k={data.k}), network is (d={p.d}, k={p.k})")
    R = _end_to_end(p, residual) @ data.X - data.Y
    G = _grads_from_residual_moment(p, R @ data.X.T, residual, backend)
    return GradientSet(G, "full")


def example_gradient(p, x, y, backend=None):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape[0] != p.d or y.shape[0] != p.k:
        raise ValueError(f"expected x of length {p.d} and y of length {p.k}")
    r = _end_to_end(p, True) @ x - y
    G = _grads_from_residual_moment(p, np.outer(r, x), True, backend)
    return GradientSet(G, "example")


def minibatch_gradient(p, data, batch, n=None, backend=None):
    """Stochastic gradient ``(n / |batch|) * sum_{i in batch} grad l_i``.

    ``batch`` holds distinct 0-based column indices of ``data``.
    """
    batch = np.asarray(batch, dtype=np.int64).reshape(-1)
    n = data.n if n is None else int(n)
    if batch.size == 0:
        raise ValueError("empty batch")
    if np.unique(batch).size != batch.size:
        raise ValueError("batch contains duplicate indices")
    if batch.min() < 0 or batch.max() >= data.n:
        raise ValueError(f"batch indices must lie in [0, {data.n})")
    Xb = data.X[:, batch]
    R = _end_to_end(p, True) @ Xb - data.Y[:, batch]
    M = (n / batch.size) * (R @ Xb.T)
    G = _grads_from_residual_moment(p, M, True, backend)
    return GradientSet(G, f"minibatch{tuple(int(i) for i in batch)}")


def fd_gradient(p, data, h=1e-5):
    """Central differences of ``loss`` entry by entry (slow, for checking)."""
    if h <= 0:
        raise ValueError(f"step h must be positive, got {h}")
    W = np.array(p.W, copy=True)
    G = np.empty_like(W)
    for idx in np.ndindex(*W.shape):
        w0 = W[idx]
        W[idx] = w0 + h
        fp = model_loss(p.with_weights(W), data)
        W[idx] = w0 - h
        fm = model_loss(p.with_weights(W), data)
        W[idx] = w0
        G[idx] = (fp - fm) / (2.0 * h)
    return GradientSet(G, "fd")

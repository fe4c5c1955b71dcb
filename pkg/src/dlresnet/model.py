"""Deep linear residual network ``f(x) = B (I + W_L) ... (I + W_1) A x``.

Hidden weights are stored as a single ``(L, m, m)`` array; ``W[l - 1]`` is
layer ``l`` (layers are numbered from 1).  The input and output maps ``A``
and ``B`` are kept as read-only arrays: training only ever produces new
hidden weights.
"""

from dataclasses import dataclass

import numpy as np

from .spectral import as_matrix, numerical_rank

__all__ = [
    "ResNetParams",
    "Dataset",
    "zero_init",
    "end_to_end",
    "forward",
    "loss",
    "layer_factors",
    "standard_linear_forward",
]


def _frozen(M, name):
    M = np.array(as_matrix(M, name), dtype=np.float64, order="C", copy=True)
    M.setflags(write=False)
    return M


@dataclass(frozen=True, eq=False)
class ResNetParams:
    A: np.ndarray
    B: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        A = _frozen(self.A, "A")
        B = _frozen(self.B, "B")
        W = np.ascontiguousarray(self.W, dtype=np.float64)
        if W.ndim != 3 or W.shape[1] != W.shape[2]:
            raise ValueError(f"W must have shape (L, m, m), got {W.shape}")
        m = A.shape[0]
        if B.shape[1] != m:
            raise ValueError(f"B is {B.shape} but A is {A.shape}: hidden widths differ")
        if W.shape[0] < 1 or W.shape[1] != m:
            raise ValueError(f"W has shape {W.shape}, expected (L>=1, {m}, {m})")
        if m < max(A.shape[1], B.shape[0]):
            raise ValueError(f"width m={m} below max(d, k)={max(A.shape[1], B.shape[0])}")
        if not np.all(np.isfinite(W)):
            raise ValueError("hidden weights contain non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "W", W)

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.A.shape[1]

    @property
    def k(self):
        return self.B.shape[0]

    @property
    def L(self):
        return self.W.shape[0]

    def with_weights(self, W):
        """Same frozen ``A``, ``B`` with new hidden weights."""
        return ResNetParams(self.A, self.B, W)


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    rank: int = None

    def __post_init__(self):
        X = _frozen(self.X, "X")
        Y = _frozen(self.Y, "Y")
        if X.shape[1] != Y.shape[1]:
            raise ValueError(f"X has {X.shape[1]} columns but Y has {Y.shape[1]}")
        r = numerical_rank(X) if self.rank is None else int(self.rank)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "rank", r)

    @property
    def n(self):
        return self.X.shape[1]

    @property
    def d(self):
        return self.X.shape[0]

    @property
    def k(self):
        return self.Y.shape[0]


def zero_init(A, B, L):
    L = int(L)
    if L < 1:
        raise ValueError(f"depth L must be >= 1, got {L}")
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if B.shape[1] != A.shape[0]:
        raise ValueError(f"B is {B.shape} but A is {A.shape}: hidden widths differ")
    m = A.shape[0]
    return ResNetParams(A, B, np.zeros((L, m, m)))


def end_to_end(p):
    """``U = B (I + W_L) ... (I + W_1) A`` as a ``k x d`` matrix."""
    P = p.A
    for Wl in p.W:
        P = P + Wl @ P
    return p.B @ P


def _check_rows(p, X):
    X = as_matrix(X, "X")
    if X.shape[0] != p.d:
        raise ValueError(f"X has {X.shape[0]} rows, network expects d={p.d}")
    return X


def forward(p, X):
    X = _check_rows(p, X)
    return end_to_end(p) @ X


def loss(p, data):
    """Training loss ``0.5 ||f(X) - Y||_F^2`` (sum, not mean, over examples)."""
    if data.d != p.d or data.k != p.k:
        raise ValueError(f"data is (d={data.d}, k={data.k}), network is (d={p.d}, k={p.k})")
    R = forward(p, data.X) - data.Y
    return 0.5 * float(np.sum(R * R))


def layer_factors(p, layer):
    """Factors around hidden layer ``layer`` (1-based, as ``W_1 .. W_L``).

    Returns ``(suffix, prefix)`` with ``suffix = B (I+W_L)...(I+W_{layer+1})``
    of shape ``k x m`` and ``prefix = (I+W_{layer-1})...(I+W_1) A`` of shape
    ``m x d``, so that ``suffix (I + W_layer) prefix`` is the end-to-end map.
    """
    layer = int(layer)
    if not 1 <= layer <= p.L:
        raise IndexError(f"layer {layer} outside [1, {p.L}]")
    prefix = p.A
    for Wl in p.W[: layer - 1]:
        prefix = prefix + Wl @ prefix
    suffix = p.B
    for Wl in p.W[layer:][::-1]:
        suffix = suffix + suffix @ Wl
    return suffix, prefix


def standard_linear_forward(p, X):
    """Output of the skip-free network ``B W_L ... W_1 A X``."""
    X = _check_rows(p, X)
    P = p.A
    for Wl in p.W:
        P = Wl @ P
    return p.B @ P @ X

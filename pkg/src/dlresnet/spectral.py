"""Dense spectral quantities: singular values, rank, norms, least squares."""

from dataclasses import dataclass, asdict

import numpy as np

__all__ = [
    "SpectralStats",
    "as_matrix",
    "singular_values",
    "numerical_rank",
    "spectral_stats",
    "least_squares_map",
]


def as_matrix(M, name="matrix"):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def singular_values(M):
    """Singular values of ``M`` in descending order (``min(rows, cols)`` of them)."""
    M = as_matrix(M)
    if M.size == 0:
        return np.zeros(0)
    return np.linalg.svd(M, compute_uv=False)


def _default_tol(shape, smax):
    return max(shape) * np.finfo(np.float64).eps * smax


def numerical_rank(M, tol=None):
    s = singular_values(M)
    if s.size == 0:
        return 0
    if tol is None:
        tol = _default_tol(np.shape(M), s[0])
    return int(np.count_nonzero(s > tol))


@dataclass(frozen=True)
class SpectralStats:
    lambda_A: float
    mu_A: float
    lambda_B: float
    mu_B: float
    x_spec: float
    x_fro: float
    x_colmax: float
    sigma_r: float
    rank_r: int
    kappa: float

    def to_dict(self):
        return asdict(self)


def spectral_stats(A, B, X, rank=None):
    """Every spectral quantity the convergence conditions consume.

    ``rank`` overrides the numerically detected rank of ``X`` when the
    caller wants sigma_r taken at an assumed rank instead.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    X = as_matrix(X, "X")
    if B.shape[1] != A.shape[0]:
        raise ValueError(f"B is {B.shape} but A is {A.shape}: inner widths differ")
    if X.shape[0] != A.shape[1]:
        raise ValueError(f"X has {X.shape[0]} rows but A has {A.shape[1]} columns")
    sA = singular_values(A)
    sB = singular_values(B)
    sX = singular_values(X)
    r = numerical_rank(X) if rank is None else int(rank)
    if not 1 <= r <= sX.size:
        raise ValueError(f"rank {r} outside [1, {sX.size}]")
    sigma_r = float(sX[r - 1])
    x_spec = float(sX[0])
    return SpectralStats(
        lambda_A=float(sA[0]),
        mu_A=float(sA[-1]),
        lambda_B=float(sB[0]),
        mu_B=float(sB[-1]),
        x_spec=x_spec,
        x_fro=float(np.linalg.norm(X)),
        x_colmax=float(np.sqrt(np.max(np.sum(X * X, axis=0)))),
        sigma_r=sigma_r,
        rank_r=r,
        kappa=x_spec**2 / sigma_r**2,
    )


def least_squares_map(X, Y, rank=None):
    """Minimum-norm least-squares map ``Phi = Y X^+`` and its loss.

    The pseudo-inverse is truncated at ``numerical_rank(X)`` (or ``rank``).
    Returns ``(Phi, optimal_loss)`` with ``optimal_loss = 0.5 ||Phi X - Y||_F^2``.
    """
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"X has {X.shape[1]} columns but Y has {Y.shape[1]}")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    r = numerical_rank(X) if rank is None else int(rank)
    if r == 0:
        Phi = np.zeros((Y.shape[0], X.shape[0]))
    else:
        # Y X^+ = (Y V_r) diag(1/s_r) U_r^T
        Phi = ((Y @ Vt[:r].T) / s[:r]) @ U[:, :r].T
    resid = Phi @ X - Y
    return Phi, 0.5 * float(np.sum(resid * resid))

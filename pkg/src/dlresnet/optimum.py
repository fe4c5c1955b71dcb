"""Global optimum of the square loss and the residual split around it."""

from dataclasses import dataclass

import numpy as np

from .spectral import as_matrix, least_squares_map

__all__ = ["OptimalFit", "fit_optimum", "residual_decomposition"]


@dataclass(frozen=True, eq=False)
class OptimalFit:
    phi: np.ndarray
    optimal_loss: float
    rank_used: int


def fit_optimum(data):
    """Best linear map for ``data`` and the loss it attains.

    No network of any depth or width can go below ``optimal_loss``, and every
    end-to-end map that reaches it agrees with ``phi`` on the column space of
    ``X``.
    """
    phi, opt = least_squares_map(data.X, data.Y, rank=data.rank)
    return OptimalFit(phi, opt, data.rank)


def residual_decomposition(U, data, fit):
    """Split ``||U X - Y||_F^2`` into ``excess + floor``.

    ``excess = ||U X - phi X||_F^2`` is the reducible part and
    ``floor = ||phi X - Y||_F^2 = 2 * optimal_loss`` is not.
    """
    U = as_matrix(U, "U")
    if U.shape != (data.k, data.d):
        raise ValueError(f"U must be {(data.k, data.d)}, got {U.shape}")
    R = U @ data.X - data.Y
    D = (U - fit.phi) @ data.X
    total = float(np.sum(R * R))
    excess = float(np.sum(D * D))
    return total, excess, 2.0 * fit.optimal_loss

"""Fixed input/output maps ``A`` (m x d) and ``B`` (k x m) and the
width/scale conditions that make GD and SGD on the residual network converge.

Three constructions are supported:

gaussian
    i.i.d. ``N(0, alpha^2)`` entries in ``A`` and ``N(0, beta^2)`` in ``B``.
plain_identity
    ``A = [I; 0]`` and ``B = sqrt(m/k) [I, 0]``.  Kept because it is the
    instructive failure case: the condition below can never hold for it.
modified_identity
    ``A`` copies input coordinate ``j`` to hidden unit ``S1[j]`` and ``B``
    reads ``alpha`` times hidden unit ``S2[i]``.  With disjoint ``S1``, ``S2``
    the product ``BA`` is exactly zero.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import rng
from .spectral import SpectralStats

__all__ = [
    "VARIANTS",
    "TransformSpec",
    "ConditionReport",
    "build_transforms",
    "gd_condition_constant",
    "sgd_condition_constant",
    "check_gd_condition",
    "check_sgd_condition",
]

VARIANTS = ("gaussian", "plain_identity", "modified_identity")

E = math.e


def gd_condition_constant():
    return 2.0 * math.sqrt(8.0 * E**3)


def sgd_condition_constant(interpolation):
    if interpolation:
        return 4.0 * math.sqrt(2.0 * E**3) * math.sqrt(2.0)
    return math.sqrt(8.0 * E**3) * math.sqrt(2.0)


@dataclass(frozen=True)
class TransformSpec:
    """Which ``(A, B)`` pair to build and for which dimensions.

    ``S1``/``S2`` are 0-based hidden-unit indices and only used by the
    modified identity; left as ``None`` they default to ``0..d-1`` and
    ``d..d+k-1``.
    """

    variant: str
    m: int
    d: int
    k: int
    alpha: float = 1.0
    beta: float = 1.0
    seed: int = 0
    S1: tuple = None
    S2: tuple = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("m", "d", "k"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        m, d, k = self.m, self.d, self.k
        if m < max(d, k):
            raise ValueError(f"width m={m} below max(d, k)={max(d, k)}")
        if self.variant == "gaussian":
            if not (self.alpha > 0 and self.beta > 0):
                raise ValueError("gaussian transforms need alpha > 0 and beta > 0")
            rng.generator(self.seed)  # validates the seed range
        if self.variant == "modified_identity":
            if not self.alpha > 0:
                raise ValueError("modified identity needs alpha > 0")
            if m < d + k:
                raise ValueError(f"modified identity needs m >= d + k = {d + k}, got m={m}")
            S1 = tuple(range(d)) if self.S1 is None else tuple(int(i) for i in self.S1)
            S2 = tuple(range(d, d + k)) if self.S2 is None else tuple(int(i) for i in self.S2)
            if len(S1) != d or len(set(S1)) != d:
                raise ValueError(f"S1 must hold {d} distinct indices")
            if len(S2) != k or len(set(S2)) != k:
                raise ValueError(f"S2 must hold {k} distinct indices")
            if any(not 0 <= i < m for i in S1 + S2):
                raise ValueError(f"S1 and S2 must lie in [0, {m})")
            if set(S1) & set(S2):
                raise ValueError("S1 and S2 must be disjoint")
            object.__setattr__(self, "S1", S1)
            object.__setattr__(self, "S2", S2)

    def to_dict(self):
        out = {"variant": self.variant, "m": self.m, "d": self.d, "k": self.k}
        if self.variant == "gaussian":
            out.update(alpha=self.alpha, beta=self.beta, seed=self.seed)
        elif self.variant == "modified_identity":
            out.update(alpha=self.alpha, S1=list(self.S1), S2=list(self.S2))
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("S1", "S2"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def build_transforms(spec):
    """Return ``(A, B)`` for ``spec`` as float64 arrays."""
    m, d, k = spec.m, spec.d, spec.k
    if spec.variant == "gaussian":
        gen = rng.generator(spec.seed)
        A = spec.alpha * rng.standard_normal(gen, (m, d))
        B = spec.beta * rng.standard_normal(gen, (k, m))
    elif spec.variant == "plain_identity":
        A = np.eye(m, d)
        B = math.sqrt(m / k) * np.eye(k, m)
    else:
        A = np.zeros((m, d))
        A[list(spec.S1), np.arange(d)] = 1.0
        B = np.zeros((k, m))
        B[np.arange(k), list(spec.S2)] = spec.alpha
    return A, B


@dataclass(frozen=True)
class ConditionReport:
    lhs: float
    rhs: float
    constant_used: float
    theorem: str
    satisfied: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "satisfied", bool(self.lhs >= self.rhs))

    def to_dict(self):
        return {"theorem": self.theorem, "lhs": self.lhs, "rhs": self.rhs,
                "constant_used": self.constant_used, "satisfied": self.satisfied}


def _transform_ratio(stats):
    return stats.mu_A**2 * stats.mu_B**2 / (stats.lambda_A * stats.lambda_B)


def check_gd_condition(stats: SpectralStats, initial_loss, optimal_loss, constant=None):
    """Scale condition on ``(A, B)`` under which full-batch GD converges linearly.

    ``mu_A^2 mu_B^2 / (lambda_A lambda_B) >= C ||X||_2 sqrt(L0 - L*) / sigma_r^2``
    """
    if optimal_loss < 0 or initial_loss < optimal_loss:
        raise ValueError(f"need initial_loss >= optimal_loss >= 0, "
                         f"got {initial_loss} and {optimal_loss}")
    C = gd_condition_constant() if constant is None else float(constant)
    rhs = C * stats.x_spec * math.sqrt(initial_loss - optimal_loss) / stats.sigma_r**2
    return ConditionReport(_transform_ratio(stats), rhs, C, "GD")


def check_sgd_condition(stats: SpectralStats, initial_loss, n, B, epsilon=None,
                        interpolation=False, constant=None):
    """Scale condition for minibatch SGD with batch size ``B`` out of ``n``.

    Without interpolation the right-hand side carries ``log(L0 / eps')`` with
    ``eps' = epsilon / 3``, the accuracy the analysis actually targets.
    """
    n, B = int(n), int(B)
    if not 1 <= B <= n:
        raise ValueError(f"need 1 <= B <= n, got B={B}, n={n}")
    if initial_loss < 0:
        raise ValueError("initial_loss must be non-negative")
    C = sgd_condition_constant(interpolation) if constant is None else float(constant)
    rhs = C * n * stats.x_spec / (B * stats.sigma_r**2) * math.sqrt(initial_loss)
    if interpolation:
        tag = "SGD-interp"
    else:
        if epsilon is None or not epsilon > 0:
            raise ValueError("epsilon > 0 is required outside the interpolation regime")
        rhs *= max(math.log(initial_loss / (epsilon / 3.0)), 0.0) if initial_loss > 0 else 0.0
        tag = "SGD"
    return ConditionReport(_transform_ratio(stats), rhs, C, tag)

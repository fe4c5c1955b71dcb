"""Numerical evaluation of the convergence inequalities.

Every check returns :class:`BoundReport` objects holding both sides of an
inequality ``lhs <= rhs``.  A report passes when
``lhs <= rhs + tol * max(|lhs|, |rhs|, 1)`` with ``tol = 1e-9`` by default,
which absorbs rounding across long matrix products.

Checks whose hypothesis (weights inside a small ball around zero) is not met
come back with ``applicable=False``.  They are still evaluated, so you can
see how far out of range a configuration is.
"""

from dataclasses import dataclass
import math

import numpy as np

from .gradients import full_gradient, example_gradient, minibatch_gradient
from .model import end_to_end, loss as model_loss, zero_init
from .spectral import as_matrix, singular_values
from .transforms import TransformSpec, build_transforms

__all__ = [
    "REL_TOL",
    "BoundReport",
    "max_spectral_norm",
    "max_frobenius_norm",
    "in_spectral_ball",
    "in_frobenius_ball",
    "lemma1_check",
    "example_bound_check",
    "stochastic_bound_check",
    "lemma2_check",
    "product_norm_check",
    "region_product_check",
    "contraction_rate",
    "width_requirement",
    "prop1_threshold",
    "Prop1Report",
    "prop1_validate",
    "gd_trajectory_checks",
]

REL_TOL = 1e-9
E = math.e


@dataclass(frozen=True)
class BoundReport:
    name: str
    lhs: float
    rhs: float
    applicable: bool = True
    layer: int = None
    iterate: int = None
    tol: float = REL_TOL

    @property
    def slack(self):
        return self.rhs - self.lhs

    @property
    def satisfied(self):
        scale = max(abs(self.lhs), abs(self.rhs), 1.0)
        return bool(self.lhs <= self.rhs + self.tol * scale)

    def to_dict(self):
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "slack": self.slack, "satisfied": self.satisfied,
                "applicable": self.applicable, "layer": self.layer,
                "iterate": self.iterate}


def max_spectral_norm(W):
    return max(float(singular_values(Wl)[0]) for Wl in W)


def max_frobenius_norm(W):
    return float(np.sqrt(np.max(np.einsum("lij,lij->l", W, W))))


def in_spectral_ball(p, tol=REL_TOL):
    return max_spectral_norm(p.W) <= (0.5 / p.L) * (1 + tol)


def in_frobenius_ball(p, tol=REL_TOL):
    return max_frobenius_norm(p.W) <= (0.5 / p.L) * (1 + tol)


def lemma1_check(p, data, stats, optimal_loss, iterate=None):
    """Per-layer two-sided bounds on the squared gradient norm.

    Returns ``2 L`` reports, lower bound then upper bound for each layer
    (layers numbered from 1).
    """
    ok = in_spectral_ball(p)
    gap = model_loss(p, data) - optimal_loss
    lo = (2.0 / E) * stats.mu_A**2 * stats.mu_B**2 * stats.sigma_r**2 * gap
    hi = 2.0 * E * stats.lambda_A**2 * stats.lambda_B**2 * stats.x_spec**2 * gap
    g2 = full_gradient(p, data).sq_norms()
    out = []
    for l, v in enumerate(g2, start=1):
        v = float(v)
        out.append(BoundReport("grad_lower", lo, v, ok, l, iterate))
        out.append(BoundReport("grad_upper", v, hi, ok, l, iterate))
    return out


def example_bound_check(p, data, stats, i):
    """Single-example gradient against ``2e lambda_A^2 lambda_B^2 ||x_i||^2 l_i``."""
    ok = in_spectral_ball(p)
    x, y = data.X[:, i], data.Y[:, i]
    r = end_to_end(p) @ x - y
    li = 0.5 * float(r @ r)
    rhs = 2.0 * E * stats.lambda_A**2 * stats.lambda_B**2 * float(x @ x) * li
    g2 = example_gradient(p, x, y).sq_norms()
    return [BoundReport("example_grad_upper", float(v), rhs, ok, l)
            for l, v in enumerate(g2, start=1)]


def stochastic_bound_check(p, data, stats, batch):
    """Minibatch gradient against ``2e (n/B)^2 lambda_A^2 lambda_B^2 ||X||^2 L(W)``."""
    ok = in_spectral_ball(p)
    n, B = data.n, len(batch)
    rhs = (2.0 * E * (n / B) ** 2 * stats.lambda_A**2 * stats.lambda_B**2
           * stats.x_spec**2 * model_loss(p, data))
    g2 = minibatch_gradient(p, data, batch).sq_norms()
    return [BoundReport("stochastic_grad_upper", float(v), rhs, ok, l)
            for l, v in enumerate(g2, start=1)]


def lemma2_check(p, p_tilde, data, stats, iterate=None):
    """Restricted smoothness between two weight settings in the Frobenius ball."""
    if p_tilde.W.shape != p.W.shape:
        raise ValueError("weight stacks differ in shape")
    ok = in_frobenius_ball(p) and in_frobenius_ball(p_tilde)
    L = p.L
    f0 = model_loss(p, data)
    f1 = model_loss(p_tilde, data)
    D = p_tilde.W - p.W
    G = full_gradient(p, data).grads
    lin = float(np.sum(G * D))
    c = stats.lambda_A * stats.lambda_B * stats.x_spec
    quad = L * c * (math.sqrt(2.0 * E * f0) + 0.5 * E * c) * float(np.sum(D * D))
    return BoundReport("smoothness", f1 - f0, lin + quad, ok, iterate=iterate)


def product_norm_check(U, V):
    """``sigma_min(U) ||V||_F <= ||U V||_F <= sigma_max(U) ||V||_F``.

    ``U`` should have full column rank for the lower bound to be meaningful.
    Returns ``(lower, upper)`` reports.  The upper report carries an absolute
    slack of 1e-10.
    """
    U = as_matrix(U, "U")
    V = as_matrix(V, "V")
    s = singular_values(U)
    vf = float(np.linalg.norm(V))
    uvf = float(np.linalg.norm(U @ V))
    full_rank = U.shape[0] >= U.shape[1]
    return (BoundReport("product_lower", float(s[-1]) * vf, uvf, full_rank),
            BoundReport("product_upper", uvf, float(s[0]) * vf + 1e-10))


def region_product_check(p):
    """Singular values of ``prod (I + W_l)`` against ``(1 -+ 0.5/L)^L``.

    Returns ``(lower, upper, sqrt_e)`` reports: ``(1 - 0.5/L)^L <= sigma_min``,
    ``sigma_max <= (1 + 0.5/L)^L`` and ``(1 + 0.5/L)^L <= sqrt(e)``.
    """
    ok = in_spectral_ball(p)
    m, L = p.m, p.L
    P = np.eye(m)
    for Wl in p.W:
        P = P + Wl @ P
    s = singular_values(P)
    up = (1.0 + 0.5 / L) ** L
    return (BoundReport("region_lower", (1.0 - 0.5 / L) ** L, float(s[-1]), ok),
            BoundReport("region_upper", float(s[0]), up, ok),
            BoundReport("region_sqrt_e", up, math.sqrt(E)))


def contraction_rate(stats, eta, L):
    """Per-step gap contraction factor ``1 - eta L mu_A^2 mu_B^2 sigma_r^2 / e``."""
    if eta < 0:
        raise ValueError(f"eta must be non-negative, got {eta}")
    rho = 1.0 - eta * L * stats.mu_A**2 * stats.mu_B**2 * stats.sigma_r**2 / E
    if rho < 0:
        raise ValueError(f"step size {eta} is too large: contraction factor {rho} < 0")
    return rho


_WIDTH_KINDS = ("GD", "SGD", "SGD-interp")


def width_requirement(kind, k, r, kappa, d=0, n=1, B=1, epsilon=None, delta=None,
                      multiplier=1.0):
    """Order-level hidden width ``m`` for Gaussian transforms.

    The asymptotic expressions are evaluated literally and scaled by
    ``multiplier``.  Their hidden constants are unknown, so treat the result
    as a trend and not as a guarantee.

    ``GD``         : ``max(k r kappa^2 log(n/delta), k + d + log(1/delta))``
    ``SGD``        : ``k r kappa^2 log(1/eps)^2 (n/B)^2 + d``
    ``SGD-interp`` : ``k r kappa^2 (n/B)^2 + d``
    """
    if kind not in _WIDTH_KINDS:
        raise ValueError(f"kind must be one of {_WIDTH_KINDS}, got {kind!r}")
    if k < 1 or r < 1 or d < 0 or n < 1 or not 1 <= B <= n:
        raise ValueError("need k, r, n >= 1, d >= 0 and 1 <= B <= n")
    if kappa < 1:
        raise ValueError(f"condition number must be >= 1, got {kappa}")
    if multiplier <= 0:
        raise ValueError("multiplier must be positive")
    base = k * r * kappa**2
    if kind == "GD":
        if delta is None or not 0 < delta < 1:
            raise ValueError("GD width needs 0 < delta < 1")
        val = max(base * math.log(n / delta), k + d + math.log(1.0 / delta))
    elif kind == "SGD":
        if epsilon is None or not 0 < epsilon < 1:
            raise ValueError("SGD width needs 0 < epsilon < 1")
        val = base * math.log(1.0 / epsilon) ** 2 * (n / B) ** 2 + d
    else:
        val = base * (n / B) ** 2 + d
    return int(math.ceil(multiplier * val))


def prop1_threshold(d, k, delta):
    """Smallest width for which the Gaussian concentration argument applies."""
    return 100.0 * (math.sqrt(max(d, k)) + math.sqrt(2.0 * math.log(12.0 / delta))) ** 2


@dataclass(frozen=True)
class Prop1Report:
    trials: int
    envelope_failures: int
    loss_failures: int
    allowed_failures: int
    threshold: float
    min_ratio: float
    max_ratio: float
    max_loss_ratio: float

    @property
    def passed(self):
        return (self.envelope_failures <= self.allowed_failures
                and self.loss_failures <= self.allowed_failures)

    def to_dict(self):
        out = dict(self.__dict__)
        out["passed"] = self.passed
        return out


def prop1_validate(m, d, k, alpha, beta, delta, trials, data, seed0=0,
                   allowed_failures=None, enforce_threshold=True):
    """Monte Carlo check of Gaussian transform spectra and zero-init loss.

    For each seed ``seed0 .. seed0 + trials - 1`` the singular values of
    ``A`` (resp. ``B``) must lie in ``[0.9, 1.1] * alpha sqrt(m)`` (resp.
    ``beta``).  The zero-init loss must stay below
    ``6.05 alpha^2 beta^2 k m log(2n/delta) ||X||_F^2 + ||Y||_F^2``.

    ``allowed_failures`` defaults to ``ceil(delta * trials)``.
    Widths under :func:`prop1_threshold` are refused unless
    ``enforce_threshold=False``.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if trials < 1:
        raise ValueError("trials must be positive")
    if data.d != d or data.k != k:
        raise ValueError(f"data is (d={data.d}, k={data.k}), expected ({d}, {k})")
    thr = prop1_threshold(d, k, delta)
    if enforce_threshold and m < thr:
        raise ValueError(f"width m={m} below the concentration threshold {thr:.1f}")
    if allowed_failures is None:
        allowed_failures = int(math.ceil(delta * trials))
    sm = math.sqrt(m)
    loss_cap = (6.05 * alpha**2 * beta**2 * k * m * math.log(2 * data.n / delta)
                * float(np.sum(data.X**2)) + float(np.sum(data.Y**2)))
    env_fail = loss_fail = 0
    lo_ratio, hi_ratio, worst_loss = np.inf, 0.0, 0.0
    for s in range(seed0, seed0 + trials):
        A, B = build_transforms(TransformSpec("gaussian", m, d, k, alpha, beta, seed=s))
        sa = singular_values(A) / (alpha * sm)
        sb = singular_values(B) / (beta * sm)
        lo = min(sa[-1], sb[-1])
        hi = max(sa[0], sb[0])
        lo_ratio, hi_ratio = min(lo_ratio, lo), max(hi_ratio, hi)
        if lo < 0.9 or hi > 1.1:
            env_fail += 1
        L0 = model_loss(zero_init(A, B, 1), data)
        worst_loss = max(worst_loss, L0 / loss_cap)
        if L0 > loss_cap:
            loss_fail += 1
    return Prop1Report(trials, env_fail, loss_fail, allowed_failures, thr,
                       float(lo_ratio), float(hi_ratio), float(worst_loss))


def gd_trajectory_checks(p0, data, stats, optimal_loss, eta, steps):
    """Replay ``steps`` GD iterations and check every iterate.

    Each iterate gets the per-layer gradient bounds and the region product
    bounds.  Each consecutive pair gets the smoothness inequality.  This
    replay uses plain numpy steps, independent of the training kernels.
    """
    out = []
    p = p0
    for t in range(int(steps) + 1):
        out.extend(lemma1_check(p, data, stats, optimal_loss, iterate=t))
        lo, hi, _ = region_product_check(p)
        out.extend([BoundReport(lo.name, lo.lhs, lo.rhs, lo.applicable, iterate=t),
                    BoundReport(hi.name, hi.lhs, hi.rhs, hi.applicable, iterate=t)])
        if t == steps:
            break
        nxt = p.with_weights(p.W - eta * full_gradient(p, data).grads)
        out.append(lemma2_check(p, nxt, data, stats, iterate=t))
        p = nxt
    return out

"""Randomized inequality suites over seeded small instances.

Each suite draws ``trials`` problems from a Philox stream keyed by ``seed``,
evaluates one family of bounds and returns a :class:`SuiteResult`.
Hidden weights are scaled to lie inside the ball ``max_l ||W_l|| <= 0.5/L``
(spectral or Frobenius as each bound requires).  The scale is drawn
uniformly up to the boundary, so the boundary itself is exercised.
"""

from dataclasses import dataclass

import numpy as np

from . import rng
from .gradients import fd_gradient, full_gradient
from .model import Dataset, ResNetParams
from .optimum import fit_optimum, residual_decomposition
from .spectral import singular_values, spectral_stats
from .theory import (example_bound_check, lemma1_check, lemma2_check,
                     product_norm_check, stochastic_bound_check)

__all__ = [
    "SuiteResult",
    "random_instance",
    "gradient_suite",
    "gradient_bounds_suite",
    "smoothness_suite",
    "decomposition_suite",
    "product_norm_suite",
    "ALL_SUITES",
]


@dataclass
class SuiteResult:
    name: str
    trials: int
    checks: int
    failures: int
    worst: float  # largest violation (or error) seen, suite-specific units

    @property
    def passed(self):
        return self.failures == 0

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return (f"{tag} {self.name}: {self.checks} checks over {self.trials} instances, "
                f"{self.failures} failed, worst {self.worst:.3e}")


def _scale_into_ball(gen, W, radius, norm):
    for l in range(W.shape[0]):
        if norm == "fro":
            cur = np.linalg.norm(W[l])
        else:
            cur = singular_values(W[l])[0]
        if cur > 0:
            W[l] *= radius * float(rng.uniforms(gen, ())) / cur
    return W


def random_instance(gen, m_max=8, dk_max=4, L_max=4, n_max=6, norm="spectral",
                    boundary=False):
    """Random ``(params, data)`` with weights in the ``0.5/L`` ball.

    ``boundary=True`` puts every layer exactly on the ball's surface.
    """
    d = int(1 + rng.uniforms(gen, ()) * dk_max)
    k = int(1 + rng.uniforms(gen, ()) * dk_max)
    m = max(d, k) + int(rng.uniforms(gen, ()) * (m_max - max(d, k) + 1))
    L = int(1 + rng.uniforms(gen, ()) * L_max)
    n = int(1 + rng.uniforms(gen, ()) * n_max)
    A = rng.standard_normal(gen, (m, d))
    B = rng.standard_normal(gen, (k, m))
    W = rng.standard_normal(gen, (L, m, m))
    radius = 0.5 / L
    if boundary:
        for l in range(L):
            s = np.linalg.norm(W[l]) if norm == "fro" else singular_values(W[l])[0]
            W[l] *= radius / s
    else:
        W = _scale_into_ball(gen, W, radius, norm)
    X = rng.standard_normal(gen, (d, n))
    Y = rng.standard_normal(gen, (k, n))
    return ResNetParams(A, B, W), Dataset(X, Y)


def gradient_suite(trials=20, seed=0, h=1e-5, tol=1e-5):
    """Analytic gradient against central differences.

    The error is entrywise ``|g - g_fd| / max(|g_fd|, 1e-3 * max|g_fd|)``,
    so entries that are tiny compared with the layer's largest entry are
    compared on the layer's scale.
    """
    gen = rng.generator(seed)
    fails, worst, checks = 0, 0.0, 0
    for _ in range(trials):
        p, data = random_instance(gen, norm="fro")
        g = full_gradient(p, data).grads
        f = fd_gradient(p, data, h).grads
        denom = np.maximum(np.abs(f), 1e-3 * np.max(np.abs(f)) + 1e-300)
        err = float(np.max(np.abs(g - f) / denom))
        worst = max(worst, err)
        checks += 1
        fails += err > tol
    return SuiteResult("gradient_vs_fd", trials, checks, fails, worst)


def _violation(r):
    scale = max(abs(r.lhs), abs(r.rhs), 1.0)
    return max(0.0, (r.lhs - r.rhs) / scale)


def gradient_bounds_suite(trials=100, seed=0):
    """Full, per-example and minibatch gradient bounds inside the spectral ball."""
    gen = rng.generator(seed)
    fails, worst, checks = 0, 0.0, 0
    for t in range(trials):
        p, data = random_instance(gen, boundary=(t % 10 == 0))
        st = spectral_stats(p.A, p.B, data.X, rank=data.rank)
        opt = fit_optimum(data).optimal_loss
        reps = lemma1_check(p, data, st, opt)
        for i in range(data.n):
            reps += example_bound_check(p, data, st, i)
        bsize = 1 + int(rng.uniforms(gen, ()) * data.n)
        batch = np.sort(gen.permutation(data.n)[:bsize])
        reps += stochastic_bound_check(p, data, st, batch)
        for r in reps:
            checks += 1
            if not (r.applicable and r.satisfied):
                fails += 1
            worst = max(worst, _violation(r))
    return SuiteResult("gradient_bounds", trials, checks, fails, worst)


def smoothness_suite(trials=100, seed=0):
    """Smoothness inequality between two random points in the Frobenius ball."""
    gen = rng.generator(seed)
    fails, worst = 0, 0.0
    for _ in range(trials):
        p, data = random_instance(gen, norm="fro")
        W2 = _scale_into_ball(gen, rng.standard_normal(gen, p.W.shape), 0.5 / p.L, "fro")
        q = p.with_weights(W2)
        st = spectral_stats(p.A, p.B, data.X, rank=data.rank)
        r = lemma2_check(p, q, data, st)
        if not (r.applicable and r.satisfied):
            fails += 1
        worst = max(worst, _violation(r))
    return SuiteResult("smoothness", trials, trials, fails, worst)


def decomposition_suite(trials=200, seed=0, tol=1e-9):
    """``||UX - Y||^2 = ||UX - Phi X||^2 + ||Phi X - Y||^2`` for random ``U``."""
    gen = rng.generator(seed)
    fails, worst = 0, 0.0
    for _ in range(trials):
        d = int(1 + rng.uniforms(gen, ()) * 6)
        k = int(1 + rng.uniforms(gen, ()) * 6)
        n = int(1 + rng.uniforms(gen, ()) * 12)
        X = rng.standard_normal(gen, (d, n))
        if rng.uniforms(gen, ()) < 0.3 and d > 1:
            X[-1] = X[0]  # rank deficient
        data = Dataset(X, rng.standard_normal(gen, (k, n)))
        fit = fit_optimum(data)
        U = rng.standard_normal(gen, (k, d))
        total, excess, floor = residual_decomposition(U, data, fit)
        err = abs(total - excess - floor) / max(total, 1e-300)
        worst = max(worst, err)
        fails += err > tol
    return SuiteResult("residual_decomposition", trials, trials, fails, worst)


def product_norm_suite(trials=100, seed=0):
    """Product Frobenius norm sandwiched by the extreme singular values of ``U``."""
    gen = rng.generator(seed)
    fails, worst = 0, 0.0
    for _ in range(trials):
        r = int(1 + rng.uniforms(gen, ()) * 5)
        d = r + int(rng.uniforms(gen, ()) * 4)
        k = int(1 + rng.uniforms(gen, ()) * 6)
        U = rng.standard_normal(gen, (d, r))
        V = rng.standard_normal(gen, (r, k))
        for rep in product_norm_check(U, V):
            if not rep.satisfied:
                fails += 1
            worst = max(worst, _violation(rep))
    return SuiteResult("product_norm", trials, 2 * trials, fails, worst)


ALL_SUITES = {
    "gradient": gradient_suite,
    "bounds": gradient_bounds_suite,
    "smoothness": smoothness_suite,
    "decomposition": decomposition_suite,
    "product": product_norm_suite,
}

"""Gradient descent and minibatch SGD on the hidden weights.

Both loops start from whatever ``p0.W`` holds (zero for the residual model)
and leave ``A`` and ``B`` untouched.  The inner loop runs in a compiled
kernel in fixed-size chunks; only every ``record_every``-th iterate, and the
last one, is stored in the :class:`Trace`.  The best gap is tracked over
every iterate.

Step sizes and horizons follow the explicit expressions of the convergence
analysis.  They are tiny on purpose: they certify convergence, they do not
make it fast.
"""

from dataclasses import dataclass, field
import csv
import io
import json
import math

import numpy as np

from . import _accel, rng
from .model import ResNetParams
from .spectral import spectral_stats
from .theory import contraction_rate

__all__ = [
    "ALGORITHMS",
    "TrainConfig",
    "Trace",
    "CSV_HEADER",
    "step_size_gd",
    "step_size_sgd",
    "horizon",
    "sgd_schedule",
    "run_gd",
    "run_sgd",
    "run_standard_baseline",
]

ALGORITHMS = ("GD", "SGD", "GD-standard-baseline")
CSV_HEADER = ("iter", "loss", "gap", "max_w_fro", "grad_sq_sum", "rho_bound", "status")
E = math.e
CHUNK = 1 << 16
DIVERGENCE_FACTOR = 1e3


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str
    eta: float
    T: int
    batch_B: int = None
    seed: int = 0
    early_stop_gap: float = None
    record_every: int = 1
    backend: str = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be positive and finite, got {self.eta}")
        if int(self.T) < 0:
            raise ValueError(f"T must be non-negative, got {self.T}")
        if int(self.record_every) < 1:
            raise ValueError("record_every must be >= 1")
        if self.algorithm == "SGD" and (self.batch_B is None or int(self.batch_B) < 1):
            raise ValueError("SGD needs a positive batch_B")
        if self.early_stop_gap is not None and self.early_stop_gap < 0:
            raise ValueError("early_stop_gap must be non-negative")
        rng.generator(self.seed)

    def to_dict(self):
        return dict(self.__dict__)


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass(eq=False)
class Trace:
    """Recorded iterates of one training run.

    Array fields are aligned with ``iters``.  Gradient columns hold the
    squared Frobenius norms of the update direction at that iterate (the
    stochastic gradient for SGD) and are NaN at the final iterate when the
    run ended early.  ``rho_bound`` is ``rho^t * gap_0``; the two bound columns
    are the per-layer squared-gradient bounds evaluated at the current gap.

    ``best_gap``, ``max_w_fro_all``, ``max_loss_increase`` and
    ``envelope_ratio`` (``max_t gap(t) / (rho^t gap(0))``) cover every
    iterate, recorded or not.
    """

    algorithm: str
    eta: float
    rho: float
    optimal_loss: float
    iters: np.ndarray
    loss: np.ndarray
    max_w_fro: np.ndarray
    grad_sq_sum: np.ndarray
    grad_sq_min: np.ndarray
    grad_sq_max: np.ndarray
    lemma1_lower: np.ndarray
    lemma1_upper: np.ndarray
    rho_bound: np.ndarray
    status: str
    steps: int
    best_gap: float
    best_iter: int
    max_w_fro_all: float
    max_loss_increase: float
    envelope_ratio: float
    final_W: np.ndarray = field(repr=False)

    @property
    def gap(self):
        return self.loss - self.optimal_loss

    @property
    def initial_gap(self):
        return float(self.gap[0])

    @property
    def last_gap(self):
        return float(self.gap[-1])

    def first_iter_below(self, level):
        """First recorded iterate with gap at most ``level``, or ``None``."""
        hit = np.nonzero(self.gap <= level)[0]
        return int(self.iters[hit[0]]) if hit.size else None

    def rows(self):
        last = len(self.iters) - 1
        for j in range(len(self.iters)):
            yield (int(self.iters[j]), self.loss[j], self.gap[j], self.max_w_fro[j],
                   self.grad_sq_sum[j], self.rho_bound[j],
                   self.status if j == last else "running")

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in self.rows():
            w.writerow([row[0]] + ["%.17g" % v for v in row[1:6]] + [row[6]])
        return buf.getvalue()

    def to_json_dict(self):
        def f(a):
            return [_num(v) for v in a]
        return {
            "algorithm": self.algorithm, "eta": self.eta, "rho": self.rho,
            "optimal_loss": self.optimal_loss, "status": self.status,
            "steps": self.steps, "best_gap": self.best_gap, "best_iter": self.best_iter,
            "max_w_fro_all": self.max_w_fro_all,
            "max_loss_increase": _num(self.max_loss_increase),
            "envelope_ratio": _num(self.envelope_ratio),
            "iter": [int(i) for i in self.iters], "loss": f(self.loss),
            "gap": f(self.gap), "max_w_fro": f(self.max_w_fro),
            "grad_sq_sum": f(self.grad_sq_sum), "grad_sq_min": f(self.grad_sq_min),
            "grad_sq_max": f(self.grad_sq_max), "lemma1_lower": f(self.lemma1_lower),
            "lemma1_upper": f(self.lemma1_upper), "rho_bound": f(self.rho_bound),
        }

    def to_json(self):
        return json.dumps(self.to_json_dict(), indent=1)


# -- theoretical step sizes and horizons --------------------------------------

def _check_stats(stats):
    if min(stats.lambda_A, stats.lambda_B, stats.x_spec) <= 0:
        raise ValueError("spectral norms of A, B and X must be positive")


def step_size_gd(stats, initial_loss, L):
    """``1 / (2 L c (sqrt(e L0) + 0.5 e c))`` with ``c = lambda_A lambda_B ||X||_2``."""
    _check_stats(stats)
    if initial_loss < 0 or int(L) < 1:
        raise ValueError("need initial_loss >= 0 and L >= 1")
    c = stats.lambda_A * stats.lambda_B * stats.x_spec
    return 1.0 / (2.0 * L * c * (math.sqrt(E * initial_loss) + 0.5 * E * c))


def step_size_sgd(stats, initial_loss, optimal_loss, n, B, L, T, delta,
                  epsilon=None, interpolation=False):
    """Largest step size the SGD analysis allows for horizon ``T``.

    Interpolation (``optimal_loss == 0``)::

        log 2 * B^2 mu^2 sigma_r^2 / (54 e^3 L n^2 lam^4 ||X||^4 log(T/delta))

    Otherwise, with ``eps' = epsilon / 3``::

        B mu^2 sigma_r^2 / (6 e^3 L n lam^4 ||X||^2)
          * min(eps' / (||X||_{2,inf}^2 L*),
                log(2)^2 B / (3 n ||X||^2 log(T/delta) log(L0/eps')))

    where ``mu^2 = mu_A^2 mu_B^2`` and ``lam^4 = lambda_A^4 lambda_B^4``.
    """
    _check_stats(stats)
    n, B, L, T = int(n), int(B), int(L), int(T)
    if not 1 <= B <= n:
        raise ValueError(f"need 1 <= B <= n, got B={B}, n={n}")
    if L < 1 or not 0 < delta < 1 or T <= delta:
        raise ValueError("need L >= 1, 0 < delta < 1 and T > delta")
    if optimal_loss < 0 or initial_loss < optimal_loss:
        raise ValueError("need initial_loss >= optimal_loss >= 0")
    mu2 = stats.mu_A**2 * stats.mu_B**2
    lam4 = stats.lambda_A**4 * stats.lambda_B**4
    xs2 = stats.x_spec**2
    log_td = math.log(T / delta)
    if interpolation:
        if optimal_loss > 1e-12 * max(initial_loss, 1.0):
            raise ValueError(f"interpolation step needs optimal_loss = 0, got {optimal_loss}")
        return (math.log(2.0) * B**2 * mu2 * stats.sigma_r**2
                / (54.0 * E**3 * L * n**2 * lam4 * xs2**2 * log_td))
    if epsilon is None or not epsilon > 0:
        raise ValueError("epsilon > 0 is required outside the interpolation regime")
    eps3 = epsilon / 3.0
    if initial_loss <= eps3:
        raise ValueError("initial loss already below epsilon/3")
    outer = B * mu2 * stats.sigma_r**2 / (6.0 * E**3 * L * n * lam4 * xs2)
    noise_term = (eps3 / (stats.x_colmax**2 * optimal_loss)
                  if optimal_loss > 0 else math.inf)
    drift_term = (math.log(2.0) ** 2 * B
                  / (3.0 * n * xs2 * log_td * math.log(initial_loss / eps3)))
    return outer * min(noise_term, drift_term)


def horizon(stats, eta, L, initial_gap, epsilon):
    """Iterations ``ceil(e / (eta L mu_A^2 mu_B^2 sigma_r^2) * log(gap0 / eps))``."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if epsilon >= initial_gap:
        return 0
    rate = eta * L * stats.mu_A**2 * stats.mu_B**2 * stats.sigma_r**2 / E
    return int(math.ceil(math.log(initial_gap / epsilon) / rate))


def sgd_schedule(stats, initial_loss, optimal_loss, n, B, L, epsilon, delta,
                 interpolation=False, max_rounds=200):
    """Self-consistent ``(eta, T)`` for SGD.

    The step size shrinks with ``log T`` and the horizon grows with
    ``1/eta``.  Starting from ``T = 1`` the map ``T -> horizon(step(T))`` is
    nondecreasing, so iterating it reaches the smallest consistent horizon.

    With noise the horizon targets ``epsilon / 3``, the accuracy the analysis
    reaches on its best iterate.  In the interpolation regime it is the first
    ``T`` at which the last-iterate bound ``2 L0 rho^T`` falls to ``epsilon``.
    """
    if interpolation:
        start, target = 2.0 * initial_loss, epsilon
    else:
        start, target = initial_loss - optimal_loss, epsilon / 3.0
    T = 1
    for _ in range(max_rounds):
        eta = step_size_sgd(stats, initial_loss, optimal_loss, n, B, L, T, delta,
                            epsilon=epsilon, interpolation=interpolation)
        T_new = max(horizon(stats, eta, L, start, target), 1)
        if T_new <= T:
            return eta, T
        T = T_new
    raise RuntimeError("step size / horizon iteration did not settle")


# -- training loops ------------------------------------------------------------

def _gram(X, Y):
    return (X @ X.T, Y @ X.T, 0.5 * float(np.sum(Y * Y)))


class _Running:
    """Whole-trajectory statistics, accumulated chunk by chunk."""

    def __init__(self, optimal_loss, log_rho):
        self.optimal_loss = optimal_loss
        self.log_rho = log_rho
        self.best_gap, self.best_iter = np.inf, 0
        self.max_w_fro = 0.0
        self.max_increase = -np.inf
        self.max_log_excess = -np.inf
        self.prev_loss = None
        self.log_gap0 = None

    def update(self, ts, loss, maxw):
        if not ts.size:
            return
        gaps = loss - self.optimal_loss
        finite = np.isfinite(gaps)
        j = int(np.argmin(np.where(finite, gaps, np.inf)))
        if gaps[j] < self.best_gap:
            self.best_gap, self.best_iter = float(gaps[j]), int(ts[j])
        self.max_w_fro = max(self.max_w_fro, float(np.max(maxw)))
        seq = loss if self.prev_loss is None else np.concatenate([[self.prev_loss], loss])
        if seq.size > 1:
            self.max_increase = max(self.max_increase, float(np.max(np.diff(seq))))
        self.prev_loss = float(loss[-1])
        if self.log_gap0 is None:
            self.log_gap0 = math.log(gaps[0]) if gaps[0] > 0 else None
        if self.log_rho is not None and self.log_gap0 is not None:
            pos = finite & (gaps > 0)
            if np.any(pos):
                le = np.log(gaps[pos]) - ts[pos] * self.log_rho - self.log_gap0
                self.max_log_excess = max(self.max_log_excess, float(np.max(le)))
            if np.any(~finite):
                self.max_log_excess = np.inf

    @property
    def envelope_ratio(self):
        """``max_t gap(t) / (rho^t gap(0))`` over every evaluated iterate."""
        if self.log_rho is None:
            return math.nan
        if self.log_gap0 is None:
            return 0.0
        return math.exp(self.max_log_excess) if self.max_log_excess > -np.inf else 0.0


def _drive(W, A, B, X, Y, eta, residual, batch, seed, T, stop_gap, optimal_loss,
           record_every, backend, rho):
    """Run ``T`` steps in chunks, then evaluate the final iterate.

    Returns ``(records, steps, status, running)``.  ``records`` is an
    ``(R, 6)`` array of ``(t, loss, maxw, gsum, gmin, gmax)``.
    """
    n = X.shape[1]
    kern = _accel.kernels(W.shape[1], backend)
    A = np.ascontiguousarray(A)
    B = np.ascontiguousarray(B)
    X = np.ascontiguousarray(X)
    Y = np.ascontiguousarray(Y)
    gram = _gram(X, Y)
    full = batch == n
    scale = n / batch
    gen = rng.generator(seed)
    perm = np.arange(n, dtype=np.int64)
    stop_loss = -np.inf if stop_gap is None else optimal_loss + stop_gap
    P = kern.prefix_products(W, A, residual)
    R0 = (B @ P[-1]) @ X - Y
    div_loss = DIVERGENCE_FACTOR * 0.5 * float(np.sum(R0 * R0))
    log_rho = None
    if rho is not None and math.isfinite(rho) and rho > 0:
        log_rho = math.log(rho)
    run = _Running(optimal_loss, log_rho)
    recs = []
    status = "horizon"
    t0 = 0
    while True:
        last_chunk = t0 + CHUNK >= T
        nsteps = (T - t0) if last_chunk else CHUNK
        out = np.empty((nsteps + int(last_chunk), 5))
        u = np.empty((1, 1)) if full else rng.uniforms(gen, (out.shape[0], batch))
        done, code = 0, 0
        if nsteps:
            done, code = kern.train_steps(W, A, B, X, Y, gram, eta, scale, residual, batch,
                                          u if full else u[:nsteps], perm, stop_loss,
                                          div_loss, out[:nsteps])
        if code == 0 and last_chunk:
            # zero-length step: evaluates (and records) the final iterate
            _, code = kern.train_steps(W, A, B, X, Y, gram, 0.0, scale, residual, batch,
                                       u if full else u[nsteps:], perm, -np.inf,
                                       div_loss, out[nsteps:])
            done = nsteps + 1
        out = out[:done]
        ts = np.arange(t0, t0 + done)
        run.update(ts, out[:, 0], out[:, 1])
        keep = ts % record_every == 0
        finished = code != 0 or last_chunk
        if finished:
            keep[-1] = True
        recs.append(np.column_stack([ts[keep], out[keep]]))
        if code == 2:
            status = "diverged"
        elif code == 1:
            status = "early-stop"
        if finished:
            steps = int(ts[-1])
            break
        t0 += done
    return np.concatenate(recs), steps, status, run


def _run(p0, data, cfg, optimal_loss, residual, batch, stats):
    if data.d != p0.d or data.k != p0.k:
        raise ValueError(f"data is (d={data.d}, k={data.k}), network is (d={p0.d}, k={p0.k})")
    W = np.array(p0.W, dtype=np.float64, order="C", copy=True)
    rho = math.nan
    if stats is not None:
        try:
            rho = contraction_rate(stats, cfg.eta, p0.L)
        except ValueError:  # step too large for the bound; train anyway
            pass
    rec, steps, status, run = _drive(
        W, p0.A, p0.B, data.X, data.Y, float(cfg.eta), residual, batch, cfg.seed,
        int(cfg.T), cfg.early_stop_gap, float(optimal_loss), int(cfg.record_every),
        cfg.backend, rho)
    t = rec[:, 0].astype(np.int64)
    loss = rec[:, 1]
    gap = loss - optimal_loss
    if stats is not None:
        lo_c = (2.0 / E) * stats.mu_A**2 * stats.mu_B**2 * stats.sigma_r**2
        hi_c = 2.0 * E * stats.lambda_A**2 * stats.lambda_B**2 * stats.x_spec**2
        lower, upper = lo_c * gap, hi_c * gap
        rho_bound = gap[0] * np.power(rho, t.astype(np.float64))
    else:
        lower = upper = rho_bound = np.full(t.shape, np.nan)
    return Trace(cfg.algorithm, float(cfg.eta), rho, float(optimal_loss), t, loss,
                 rec[:, 2], rec[:, 3], rec[:, 4], rec[:, 5], lower, upper, rho_bound,
                 status, steps, run.best_gap, run.best_iter, run.max_w_fro,
                 run.max_increase, run.envelope_ratio, W)


def run_gd(p0, data, cfg, optimal_loss):
    """Full-batch gradient descent for ``cfg.T`` steps."""
    if cfg.algorithm != "GD":
        raise ValueError(f"run_gd needs algorithm 'GD', got {cfg.algorithm!r}")
    stats = spectral_stats(p0.A, p0.B, data.X, rank=data.rank)
    return _run(p0, data, cfg, optimal_loss, True, data.n, stats)


def run_sgd(p0, data, cfg, optimal_loss):
    """Minibatch SGD with batches drawn without replacement.

    ``B == n`` takes exactly the same code path as :func:`run_gd`.
    """
    if cfg.algorithm != "SGD":
        raise ValueError(f"run_sgd needs algorithm 'SGD', got {cfg.algorithm!r}")
    B = int(cfg.batch_B)
    if not 1 <= B <= data.n:
        raise ValueError(f"batch size {B} outside [1, {data.n}]")
    stats = spectral_stats(p0.A, p0.B, data.X, rank=data.rank)
    return _run(p0, data, cfg, optimal_loss, True, B, stats)


def gaussian_hidden_init(m, L, init_scale, seed):
    """``(L, m, m)`` weights with i.i.d. ``N(0, init_scale^2 / m)`` entries."""
    gen = rng.generator(seed)
    return (init_scale / math.sqrt(m)) * rng.standard_normal(gen, (L, m, m))


def run_standard_baseline(A, B, data, cfg, L, optimal_loss, init_scale=1.0, W0=None):
    """GD on the skip-free product ``B W_L ... W_1 A``.

    Hidden weights start from ``gaussian_hidden_init`` seeded with
    ``cfg.seed`` unless ``W0`` is given.
    """
    if cfg.algorithm != "GD-standard-baseline":
        raise ValueError("run_standard_baseline needs algorithm 'GD-standard-baseline'")
    m = np.shape(A)[0]
    if W0 is None:
        W0 = gaussian_hidden_init(m, int(L), init_scale, cfg.seed)
    p0 = ResNetParams(A, B, W0)
    if p0.L != int(L):
        raise ValueError(f"W0 has depth {p0.L}, expected {L}")
    return _run(p0, data, cfg, optimal_loss, False, data.n, None)

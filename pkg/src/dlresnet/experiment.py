"""Synthetic data, end-to-end runs and parameter sweeps.

A run is fully described by an :class:`~dlresnet.config.ExperimentConfig`.
Randomness comes from three independent seeds (data, transform, training),
so one axis can vary while the others stay fixed.
"""

from dataclasses import dataclass, field
import json
import math
import os

import numpy as np

from . import _accel, rng
from .config import ExperimentConfig, dumps
from .model import (Dataset, ResNetParams, zero_init, loss as model_loss,
                    standard_linear_forward)
from .optimum import fit_optimum
from .spectral import spectral_stats
from .theory import gd_trajectory_checks
from .trainer import (TrainConfig, horizon, run_gd, run_sgd, run_standard_baseline,
                      sgd_schedule, step_size_gd, step_size_sgd, gaussian_hidden_init)
from .transforms import (TransformSpec, build_transforms, check_gd_condition,
                         check_sgd_condition)

__all__ = [
    "MAP_KINDS",
    "ALPHA_MARGIN",
    "gen_synthetic",
    "Problem",
    "prepare",
    "condition_report",
    "RunArtifact",
    "run_experiment",
    "SweepResult",
    "SWEEP_AXES",
    "sweep",
]

MAP_KINDS = ("neg_identity", "random_gaussian", "custom")
# automatic alpha for the modified identity: this factor above the smallest
# value that meets the convergence condition
ALPHA_MARGIN = 1.01
THRESHOLDS = (1e-1, 1e-2, 1e-3)


def gen_synthetic(d, k, n, noise, seed, map_kind="neg_identity", phi=None, whiten=False):
    """Gaussian inputs ``X`` (d x n) and targets ``Y = Phi X + noise * E``.

    ``map_kind`` picks ``Phi``: ``neg_identity`` (needs ``k == d``),
    ``random_gaussian`` (entries ``N(0, 1/d)``) or ``custom`` (pass ``phi``).
    With ``whiten=True`` the inputs are replaced by ``sqrt(n) U V^T`` from the
    thin SVD ``X = U S V^T``.  That gives ``X X^T = n I`` and condition
    number 1.
    """
    d, k, n = int(d), int(k), int(n)
    if min(d, k, n) < 1:
        raise ValueError("d, k and n must be positive")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    if map_kind not in MAP_KINDS:
        raise ValueError(f"map_kind must be one of {MAP_KINDS}, got {map_kind!r}")
    gen = rng.generator(seed)
    X = rng.standard_normal(gen, (d, n))
    if whiten:
        if n < d:
            raise ValueError("whitening needs n >= d")
        U, _, Vt = np.linalg.svd(X, full_matrices=False)
        X = math.sqrt(n) * (U @ Vt)
    if map_kind == "neg_identity":
        if k != d:
            raise ValueError(f"neg_identity needs k == d, got k={k}, d={d}")
        Phi = -np.eye(d)
    elif map_kind == "random_gaussian":
        Phi = rng.standard_normal(gen, (k, d)) / math.sqrt(d)
    else:
        if phi is None:
            raise ValueError("map_kind='custom' needs phi")
        Phi = np.asarray(phi, dtype=np.float64)
        if Phi.shape != (k, d):
            raise ValueError(f"phi must be {(k, d)}, got {Phi.shape}")
    Y = Phi @ X
    if noise > 0:
        Y = Y + noise * rng.standard_normal(gen, (k, n))
    return Dataset(X, Y)


@dataclass(eq=False)
class Problem:
    """Everything a run needs before training starts."""

    cfg: ExperimentConfig
    data: Dataset
    fit: object
    spec: TransformSpec
    A: np.ndarray
    B: np.ndarray
    stats: object
    initial_loss: float

    @property
    def initial_gap(self):
        return self.initial_loss - self.fit.optimal_loss


def condition_report(cfg, stats, L0, opt, n, batch):
    """Convergence condition matching ``cfg.train_algorithm`` (None for the baseline)."""
    if cfg.train_algorithm == "GD":
        return check_gd_condition(stats, L0, opt)
    if cfg.train_algorithm == "SGD":
        if cfg.train_interpolation:
            return check_sgd_condition(stats, L0, n, batch, interpolation=True)
        return check_sgd_condition(stats, L0, n, batch,
                                   epsilon=cfg.train_epsilon_rel * (L0 - opt))
    return None


def _batch(cfg, n):
    B = cfg.train_batch if cfg.train_batch > 0 else n
    if B > n:
        raise ValueError(f"train.batch={B} exceeds n={n}")
    return B


def prepare(cfg):
    data = gen_synthetic(cfg.data_d, cfg.data_k, cfg.data_n, cfg.data_noise,
                         cfg.seed_data, cfg.data_map, whiten=cfg.data_whiten)
    fit = fit_optimum(data)
    m, d, k = cfg.model_m, cfg.data_d, cfg.data_k
    alpha = cfg.transform_alpha
    if alpha == "auto":
        if cfg.transform_variant != "modified_identity":
            raise ValueError("transform.alpha = auto only applies to modified_identity")
        # lhs of every condition is exactly alpha for this construction, while
        # the rhs does not depend on alpha (BA = 0 fixes the initial loss)
        probe = TransformSpec("modified_identity", m, d, k, alpha=1.0,
                              S1=cfg.transform_S1, S2=cfg.transform_S2)
        A1, B1 = build_transforms(probe)
        st1 = spectral_stats(A1, B1, data.X, rank=data.rank)
        L0 = model_loss(zero_init(A1, B1, 1), data)
        rep = condition_report(cfg.with_values(train_algorithm=(
            "SGD" if cfg.train_algorithm == "SGD" else "GD")),
            st1, L0, fit.optimal_loss, data.n, _batch(cfg, data.n))
        alpha = ALPHA_MARGIN * rep.rhs / rep.lhs if rep.rhs > 0 else 1.0
    spec = TransformSpec(cfg.transform_variant, m, d, k, alpha=float(alpha),
                         beta=cfg.transform_beta, seed=cfg.seed_transform,
                         S1=cfg.transform_S1, S2=cfg.transform_S2)
    A, B = build_transforms(spec)
    stats = spectral_stats(A, B, data.X, rank=data.rank)
    L0 = model_loss(zero_init(A, B, 1), data)
    return Problem(cfg, data, fit, spec, A, B, stats, L0)


def _schedule(pb):
    """Resolve ``train.eta``/``train.T`` (possibly ``auto``) and the target gap."""
    cfg, st, L = pb.cfg, pb.stats, pb.cfg.model_L
    opt = pb.fit.optimal_loss
    n = pb.data.n
    alg = cfg.train_algorithm
    if alg == "SGD" and cfg.train_interpolation:
        target = cfg.train_epsilon_rel * pb.initial_loss
    else:
        target = cfg.train_epsilon_rel * pb.initial_gap
    eta, T = cfg.train_eta, cfg.train_T
    if alg == "GD":
        if eta == "auto":
            eta = step_size_gd(st, pb.initial_loss, L)
        if T == "auto":
            T = horizon(st, eta, L, pb.initial_gap, target)
    elif alg == "SGD":
        B = _batch(cfg, n)
        if eta == "auto":
            if T == "auto":
                eta, T = sgd_schedule(st, pb.initial_loss, opt, n, B, L, target,
                                      cfg.train_delta, interpolation=cfg.train_interpolation)
            else:
                eta = step_size_sgd(st, pb.initial_loss, opt, n, B, L, T, cfg.train_delta,
                                    epsilon=target, interpolation=cfg.train_interpolation)
        elif T == "auto":
            start = 2.0 * pb.initial_loss if cfg.train_interpolation else pb.initial_gap
            goal = target if cfg.train_interpolation else target / 3.0
            T = horizon(st, eta, L, start, goal)
    else:
        W0 = gaussian_hidden_init(cfg.model_m, L, cfg.train_init_scale, cfg.seed_train)
        base0 = _baseline_loss(pb, W0)
        target = cfg.train_epsilon_rel * (base0 - opt)
        if eta == "auto":
            # same rule as the residual network, fed the baseline's own initial loss
            eta = step_size_gd(st, base0, L)
        if T == "auto":
            raise ValueError("train.T = auto is not defined for the baseline")
    return float(eta), int(T), float(target)


def _baseline_loss(pb, W0):
    R = standard_linear_forward(ResNetParams(pb.A, pb.B, W0), pb.data.X) - pb.data.Y
    return 0.5 * float(np.sum(R * R))


def _fmt(v):
    if isinstance(v, float):
        return None if not math.isfinite(v) else v
    return v


@dataclass(eq=False)
class RunArtifact:
    cfg: ExperimentConfig
    trace: object
    condition: object
    bounds: list
    summary: dict
    alpha: float = None
    paths: list = field(default_factory=list)

    def summary_json(self):
        return json.dumps({k: _fmt(v) for k, v in self.summary.items()},
                          indent=1, sort_keys=True)

    def bounds_csv(self):
        lines = ["name,iterate,layer,lhs,rhs,slack,satisfied,applicable"]
        for b in self.bounds:
            lines.append(",".join([
                b.name, "" if b.iterate is None else str(b.iterate),
                "" if b.layer is None else str(b.layer),
                "%.17g" % b.lhs, "%.17g" % b.rhs, "%.17g" % b.slack,
                str(b.satisfied).lower(), str(b.applicable).lower()]))
        return "\n".join(lines) + "\n"

    def write(self, prefix=None, fmt=None):
        """Write trace, config echo, summary (and bound checks if any)."""
        prefix = self.cfg.out_prefix if prefix is None else prefix
        fmt = self.cfg.out_format if fmt is None else fmt
        parent = os.path.dirname(prefix)
        if parent:
            os.makedirs(parent, exist_ok=True)
        files = {f"{prefix}.cfg": dumps(self.cfg),
                 f"{prefix}.summary.json": self.summary_json() + "\n"}
        if fmt == "csv":
            files[f"{prefix}.csv"] = self.trace.to_csv()
        elif fmt == "json":
            files[f"{prefix}.json"] = self.trace.to_json() + "\n"
        else:
            raise ValueError(f"format must be csv or json, got {fmt!r}")
        if self.bounds:
            files[f"{prefix}.bounds.csv"] = self.bounds_csv()
        for path, text in files.items():
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        self.paths = list(files)
        return self.paths


def _summary(pb, cfg, trace, eta, T, target, condition, bounds):
    gap0 = trace.initial_gap
    s = {
        "algorithm": cfg.train_algorithm,
        "transform": cfg.transform_variant,
        "m": cfg.model_m, "L": cfg.model_L, "n": pb.data.n,
        "eta": eta, "T": T, "target_gap": target,
        "optimal_loss": pb.fit.optimal_loss,
        "initial_loss": float(trace.loss[0]),
        "final_loss": float(trace.loss[-1]),
        "final_gap": trace.last_gap,
        "best_gap": trace.best_gap, "best_iter": trace.best_iter,
        "status": trace.status, "steps": trace.steps,
        "rho": trace.rho,
        "max_w_fro": trace.max_w_fro_all,
        "ball_radius": 0.5 / cfg.model_L,
        "envelope_ratio": trace.envelope_ratio,
        "kappa": pb.stats.kappa,
        "backend": _accel.backend_name(cfg.model_m, cfg.train_backend),
    }
    for th in THRESHOLDS:
        s[f"iters_to_{th:g}"] = trace.first_iter_below(th * gap0) if gap0 > 0 else 0
    if condition is not None:
        s["condition_lhs"] = condition.lhs
        s["condition_rhs"] = condition.rhs
        s["condition_satisfied"] = condition.satisfied
    if bounds:
        s["bounds_checked"] = len(bounds)
        s["bounds_failed"] = sum(1 for b in bounds if b.applicable and not b.satisfied)
    return s


def run_experiment(cfg, write=False):
    """Build data, transforms and optimum, train, and assemble the artifact."""
    pb = prepare(cfg)
    eta, T, target = _schedule(pb)
    opt = pb.fit.optimal_loss
    n = pb.data.n
    batch = _batch(cfg, n)
    condition = (condition_report(cfg, pb.stats, pb.initial_loss, opt, n, batch)
                 if cfg.check_condition else None)
    backend = None if cfg.train_backend == "auto" else cfg.train_backend
    stop = target if cfg.train_early_stop else None
    tc = TrainConfig(cfg.train_algorithm, eta, T, batch_B=batch, seed=cfg.seed_train,
                     early_stop_gap=stop, record_every=cfg.train_record_every,
                     backend=backend)
    p0 = zero_init(pb.A, pb.B, cfg.model_L)
    if cfg.train_algorithm == "GD":
        trace = run_gd(p0, pb.data, tc, opt)
    elif cfg.train_algorithm == "SGD":
        trace = run_sgd(p0, pb.data, tc, opt)
    else:
        trace = run_standard_baseline(pb.A, pb.B, pb.data, tc, cfg.model_L, opt,
                                      init_scale=cfg.train_init_scale)
    bounds = []
    if cfg.check_trajectory and cfg.train_algorithm == "GD":
        bounds = gd_trajectory_checks(p0, pb.data, pb.stats, opt, eta,
                                      min(cfg.check_trajectory, T))
    art = RunArtifact(cfg, trace, condition, bounds,
                      _summary(pb, cfg, trace, eta, T, target, condition, bounds),
                      alpha=pb.spec.alpha)
    if write:
        art.write()
    return art


SWEEP_AXES = {"L": "model.L", "m": "model.m", "B": "train.batch", "seed": "train.seed",
              "seed_data": "data.seed", "seed_transform": "transform.seed",
              "algorithm": "train.algorithm", "variant": "transform.variant"}


@dataclass(eq=False)
class SweepResult:
    axis: str
    values: list
    artifacts: list
    errors: dict

    def rows(self):
        cols = ("status", "steps", "final_gap", "best_gap", "iters_to_0.1",
                "iters_to_0.01", "iters_to_0.001")
        out = []
        for v, art in zip(self.values, self.artifacts):
            if art is None:
                out.append({self.axis: v, "status": "error: " + self.errors[v]})
            else:
                out.append({self.axis: v, **{c: art.summary.get(c) for c in cols}})
        return out

    def table(self):
        rows = self.rows()
        cols = [self.axis, "status", "steps", "final_gap", "best_gap",
                "iters_to_0.1", "iters_to_0.01", "iters_to_0.001"]

        def cell(v):
            if isinstance(v, float):
                return f"{v:.6g}"
            return "-" if v is None else str(v)

        body = [[cell(r.get(c)) for c in cols] for r in rows]
        widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c)
                  for i, c in enumerate(cols)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
        lines += ["  ".join(b[i].ljust(widths[i]) for i in range(len(cols))) for b in body]
        return "\n".join(lines) + "\n"


def sweep(template, axis, values, write=False):
    """One run per value of ``axis``; failures are recorded, not raised.

    ``axis`` is a short name from ``SWEEP_AXES`` or any dotted config key.
    Each run writes under ``<prefix>.<axis>=<value>`` when ``write`` is set.
    """
    key = SWEEP_AXES.get(axis, axis)
    arts, errors = [], {}
    for v in values:
        try:
            cfg = template.with_keys({key: v})
            cfg = cfg.with_values(out_prefix=f"{template.out_prefix}.{axis}={v}")
            arts.append(run_experiment(cfg, write=write))
        except Exception as exc:  # isolate per-run failures
            arts.append(None)
            errors[v] = f"{type(exc).__name__}: {exc}"
    res = SweepResult(axis, list(values), arts, errors)
    if write:
        path = f"{template.out_prefix}.sweep-{axis}.txt"
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(res.table())
    return res

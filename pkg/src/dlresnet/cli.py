"""Command line interface.

Subcommands::

    gen-data   write the synthetic X and Y matrices as CSV
    train      run one experiment and write its trace
    check      evaluate the convergence conditions without training
    verify     randomized inequality suites plus a replayed GD trajectory
    sweep      run one experiment per value of an axis and tabulate

Exit status is 0 on success, 2 when a condition or bound check fails, and 3
when training diverges.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from .experiment import (SWEEP_AXES, condition_report, gen_synthetic, prepare,
                         run_experiment, sweep)
from .suites import ALL_SUITES
from .theory import gd_trajectory_checks, width_requirement
from .trainer import sgd_schedule, step_size_gd, horizon
from .model import zero_init

EXIT_OK, EXIT_CONDITION, EXIT_DIVERGED = 0, 2, 3


def _load(args):
    cfg = cfgmod.load(args.config) if args.config else cfgmod.ExperimentConfig()
    kw = {}
    if args.seed_data is not None:
        kw["seed_data"] = args.seed_data
    if args.seed_transform is not None:
        kw["seed_transform"] = args.seed_transform
    if args.seed_train is not None:
        kw["seed_train"] = args.seed_train
    if args.out is not None:
        kw["out_prefix"] = args.out
    if args.format is not None:
        kw["out_format"] = args.format
    return cfg.with_values(**kw)


def _u64(s):
    return cfgmod.parse_value("data.seed", s)


def _ensure_parent(prefix):
    parent = os.path.dirname(prefix)
    if parent:
        os.makedirs(parent, exist_ok=True)


def cmd_gen_data(cfg, args):
    data = gen_synthetic(cfg.data_d, cfg.data_k, cfg.data_n, cfg.data_noise,
                         cfg.seed_data, cfg.data_map, whiten=cfg.data_whiten)
    _ensure_parent(cfg.out_prefix)
    for name, M in (("X", data.X), ("Y", data.Y)):
        np.savetxt(f"{cfg.out_prefix}.{name}.csv", M, fmt="%.17g", delimiter=",")
    print(f"wrote {cfg.out_prefix}.X.csv ({data.d}x{data.n}) and "
          f"{cfg.out_prefix}.Y.csv ({data.k}x{data.n}), rank {data.rank}")
    return EXIT_OK


def cmd_train(cfg, args):
    if cfg.check_require_condition:
        code = cmd_check(cfg, args, quiet=True)
        if code != EXIT_OK:
            print("convergence condition not met; refusing to train "
                  "(set checks.require_condition = false to override)")
            return code
    art = run_experiment(cfg, write=True)
    s = art.summary
    for key in ("algorithm", "transform", "eta", "T", "steps", "status", "initial_loss",
                "final_gap", "best_gap", "iters_to_0.01", "max_w_fro"):
        print(f"{key:>14}: {s[key]}")
    for p in art.paths:
        print(f"wrote {p}")
    if s["status"] == "diverged":
        return EXIT_DIVERGED
    if s.get("bounds_failed"):
        return EXIT_CONDITION
    return EXIT_OK


def cmd_check(cfg, args, quiet=False):
    pb = prepare(cfg)
    st, opt, L = pb.stats, pb.fit.optimal_loss, cfg.model_L
    n = pb.data.n
    B = cfg.train_batch if cfg.train_batch > 0 else n
    ccfg = cfg
    if cfg.train_algorithm == "GD-standard-baseline":
        ccfg = cfg.with_values(train_algorithm="GD")
    rep = condition_report(ccfg, st, pb.initial_loss, opt, n, B)
    out = {"stats": st.to_dict(), "initial_loss": pb.initial_loss, "optimal_loss": opt,
           "alpha": pb.spec.alpha, "condition": rep.to_dict()}
    if cfg.train_algorithm == "SGD":
        target = cfg.train_epsilon_rel * (pb.initial_loss if cfg.train_interpolation
                                          else pb.initial_gap)
        eta, T = sgd_schedule(st, pb.initial_loss, opt, n, B, L, target, cfg.train_delta,
                              interpolation=cfg.train_interpolation)
        kind = "SGD-interp" if cfg.train_interpolation else "SGD"
        width = width_requirement(kind, cfg.data_k, st.rank_r, st.kappa, d=cfg.data_d,
                                  n=n, B=B, epsilon=cfg.train_epsilon_rel)
    else:
        eta = step_size_gd(st, pb.initial_loss, L)
        T = horizon(st, eta, L, pb.initial_gap, cfg.train_epsilon_rel * pb.initial_gap)
        width = width_requirement("GD", cfg.data_k, st.rank_r, st.kappa, d=cfg.data_d,
                                  n=n, delta=cfg.train_delta)
    out.update(eta=eta, T=T, order_level_width=width)
    if not quiet:
        print(json.dumps(out, indent=1, sort_keys=True))
    return EXIT_OK if rep.satisfied else EXIT_CONDITION


def cmd_verify(cfg, args):
    failed = False
    for name, fn in ALL_SUITES.items():
        res = fn(trials=args.trials, seed=cfg.seed_train) if args.trials else fn(
            seed=cfg.seed_train)
        print(res.line())
        failed |= not res.passed
    pb = prepare(cfg.with_values(train_algorithm="GD"))
    eta = cfg.train_eta
    if eta == "auto":
        eta = step_size_gd(pb.stats, pb.initial_loss, cfg.model_L)
    steps = cfg.check_trajectory or 5
    reps = gd_trajectory_checks(zero_init(pb.A, pb.B, cfg.model_L), pb.data, pb.stats,
                                pb.fit.optimal_loss, eta, steps)
    applicable = [r for r in reps if r.applicable]
    bad = [r for r in applicable if not r.satisfied]
    tag = "PASS" if not bad else "FAIL"
    print(f"{tag} trajectory: {len(applicable)} applicable of {len(reps)} checks over "
          f"{steps} GD steps, {len(bad)} failed")
    failed |= bool(bad)
    return EXIT_CONDITION if failed else EXIT_OK


def cmd_sweep(cfg, args):
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    res = sweep(cfg, args.axis, values, write=True)
    sys.stdout.write(res.table())
    statuses = [a.summary["status"] for a in res.artifacts if a is not None]
    if "diverged" in statuses:
        return EXIT_DIVERGED
    return EXIT_OK if not res.errors else 1


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value experiment file")
    common.add_argument("--seed-data", type=_u64)
    common.add_argument("--seed-transform", type=_u64)
    common.add_argument("--seed-train", type=_u64)
    common.add_argument("--out", help="output path prefix")
    common.add_argument("--format", choices=("csv", "json"))

    p = argparse.ArgumentParser(prog="dlresnet",
                                description="Deep linear residual network experiments")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="write synthetic X, Y")
    sub.add_parser("train", parents=[common], help="train and write the trace")
    sub.add_parser("check", parents=[common], help="evaluate convergence conditions")
    v = sub.add_parser("verify", parents=[common], help="run inequality suites")
    v.add_argument("--trials", type=int, default=0,
                   help="instances per suite (default: each suite's own)")
    s = sub.add_parser("sweep", parents=[common], help="sweep one axis")
    s.add_argument("--axis", required=True,
                   help=f"one of {sorted(SWEEP_AXES)} or a dotted config key")
    s.add_argument("--values", required=True, help="comma-separated values")
    return p


_COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "check": cmd_check,
             "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        return _COMMANDS[args.command](cfg, args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

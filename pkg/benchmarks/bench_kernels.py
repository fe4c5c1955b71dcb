"""Time the numba and numpy training kernels on a few problem shapes.

    python3 benchmarks/bench_kernels.py [--steps N]

Prints microseconds per training step for each backend and their ratio.
The first numba call of each shape is excluded (JIT compilation).
"""

import argparse
import time

import numpy as np

from dlresnet import _kernels_numba, _kernels_numpy
from dlresnet.transforms import TransformSpec, build_transforms

# (label, m, d, k, L, n, batch)
SHAPES = [
    ("desk SGD", 8, 4, 4, 1, 64, 8),
    ("desk SGD, L=4", 8, 4, 4, 4, 64, 8),
    ("small GD", 16, 4, 4, 4, 64, 64),
    ("width 48 GD", 48, 10, 10, 10, 1000, 1000),
    ("width 200 GD", 200, 10, 10, 10, 1000, 1000),
    ("width 200 SGD", 200, 10, 10, 10, 1000, 100),
]


def _problem(m, d, k, L, n, seed=0):
    gen = np.random.default_rng(seed)
    A, B = build_transforms(TransformSpec("gaussian", m, d, k, seed=seed))
    X = gen.standard_normal((d, n))
    Y = -X[:k] + 0.1 * gen.standard_normal((k, n)) if k <= d else gen.standard_normal((k, n))
    return A, B, X, Y


def _time(kern, args, W0, steps, batch, n, u):
    W = W0.copy()
    out = np.empty((steps, 5))
    A, B, X, Y, gram = args
    t0 = time.perf_counter()
    kern.train_steps(W, A, B, X, Y, gram, 1e-12, n / batch, True, batch, u,
                     np.arange(n, dtype=np.int64), -np.inf, np.inf, out)
    return (time.perf_counter() - t0) / steps * 1e6, W


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args(argv)
    print(f"{'shape':<16}{'numba us':>10}{'numpy us':>10}{'ratio':>8}  max |dW|")
    for label, m, d, k, L, n, batch in SHAPES:
        A, B, X, Y = _problem(m, d, k, L, n)
        gram = (X @ X.T, Y @ X.T, 0.5 * float(np.sum(Y * Y)))
        W0 = np.zeros((L, m, m))
        steps = args.steps if m <= 48 else max(args.steps // 20, 20)
        u = np.random.default_rng(1).random((steps, batch))
        kargs = (A, B, X, Y, gram)
        _time(_kernels_numba, kargs, W0, 2, batch, n, u[:2])  # compile
        t_nb, W_nb = _time(_kernels_numba, kargs, W0, steps, batch, n, u)
        t_np, W_np = _time(_kernels_numpy, kargs, W0, steps, batch, n, u)
        diff = float(np.max(np.abs(W_nb - W_np)))
        print(f"{label:<16}{t_nb:>10.2f}{t_np:>10.2f}{t_np / t_nb:>8.2f}  {diff:.1e}")


if __name__ == "__main__":
    main()

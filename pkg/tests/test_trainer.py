import csv
import io
import json
import math
from itertools import combinations

import numpy as np
import pytest

from dlresnet import rng
from dlresnet import _kernels_numpy
from dlresnet.gradients import full_gradient, minibatch_gradient
from dlresnet.model import Dataset, ResNetParams, forward, loss, zero_init
from dlresnet.optimum import fit_optimum
from dlresnet.spectral import spectral_stats
from dlresnet.theory import contraction_rate
from dlresnet.trainer import (CSV_HEADER, TrainConfig, horizon, run_gd, run_sgd,
                              run_standard_baseline, sgd_schedule, step_size_gd,
                              step_size_sgd)
from dlresnet.transforms import TransformSpec, build_transforms

from conftest import random_data

E = math.e


def small_problem(np_rng, m=10, d=3, k=3, n=12, L=3, noise=0.1):
    A, B = build_transforms(TransformSpec("gaussian", m, d, k, seed=2))
    X = np_rng.standard_normal((d, n))
    data = Dataset(X, -X[:k] + noise * np_rng.standard_normal((k, n)))
    p0 = zero_init(A, B, L)
    return p0, data, spectral_stats(A, B, X), fit_optimum(data).optimal_loss


class TestStepSizes:
    def test_gd_scalar(self):
        st = spectral_stats([[1.0]], [[1.0]], [[1.0]])
        assert step_size_gd(st, 0.0, 1) == pytest.approx(1 / E)

    def test_gd_formula(self, np_rng):
        p0, data, st, _ = small_problem(np_rng)
        L0 = loss(p0, data)
        c = (np.linalg.norm(p0.A, 2) * np.linalg.norm(p0.B, 2) * np.linalg.norm(data.X, 2))
        ref = 1 / (2 * 3 * c * (math.sqrt(E * L0) + 0.5 * E * c))
        assert step_size_gd(st, L0, 3) == pytest.approx(ref, rel=1e-12)

    def test_gd_scaling_in_lambda(self):
        X = np.eye(2)
        s1 = spectral_stats(np.eye(2), np.eye(2), X)
        s2 = spectral_stats(np.eye(2), 2 * np.eye(2), X)
        assert step_size_gd(s1, 0.0, 1) / step_size_gd(s2, 0.0, 1) == pytest.approx(4.0)

    def test_gd_invalid(self):
        st = spectral_stats(np.eye(2), np.eye(2), np.eye(2))
        with pytest.raises(ValueError):
            step_size_gd(st, 1.0, 0)
        with pytest.raises(ValueError):
            step_size_gd(spectral_stats(np.eye(2), np.zeros((2, 2)), np.eye(2)), 1.0, 1)

    def test_sgd_interp_formula(self, np_rng):
        _, _, st, _ = small_problem(np_rng)
        n, Bsz, L, T, delta = 12, 3, 2, 1000, 0.1
        mu2 = st.mu_A**2 * st.mu_B**2
        lam4 = st.lambda_A**4 * st.lambda_B**4
        ref = (math.log(2) * Bsz**2 * mu2 * st.sigma_r**2
               / (54 * E**3 * L * n**2 * lam4 * st.x_spec**4 * math.log(T / delta)))
        got = step_size_sgd(st, 5.0, 0.0, n, Bsz, L, T, delta, interpolation=True)
        assert got == pytest.approx(ref, rel=1e-12)
        full = step_size_sgd(st, 5.0, 0.0, n, n, L, T, delta, interpolation=True)
        assert full == pytest.approx(ref * (n / Bsz) ** 2, rel=1e-12)

    def test_sgd_noisy_formula(self, np_rng):
        _, _, st, _ = small_problem(np_rng)
        n, Bsz, L, T, delta, L0, opt, eps = 12, 3, 2, 1000, 0.1, 5.0, 0.4, 0.3
        mu2 = st.mu_A**2 * st.mu_B**2
        lam4 = st.lambda_A**4 * st.lambda_B**4
        outer = Bsz * mu2 * st.sigma_r**2 / (6 * E**3 * L * n * lam4 * st.x_spec**2)
        e3 = eps / 3
        a = e3 / (st.x_colmax**2 * opt)
        b = math.log(2) ** 2 * Bsz / (3 * n * st.x_spec**2 * math.log(T / delta)
                                      * math.log(L0 / e3))
        got = step_size_sgd(st, L0, opt, n, Bsz, L, T, delta, epsilon=eps)
        assert got == pytest.approx(outer * min(a, b), rel=1e-12)

    def test_sgd_eps_to_zero(self, np_rng):
        _, _, st, _ = small_problem(np_rng)
        etas = [step_size_sgd(st, 5.0, 0.5, 12, 3, 2, 100, 0.1, epsilon=e)
                for e in (1e-2, 1e-4, 1e-6, 1e-8)]
        assert all(b < a for a, b in zip(etas, etas[1:]))
        # once the noise branch of the min is active, eta is proportional to eps
        assert etas[3] / etas[2] == pytest.approx(1e-2, rel=1e-12)

    def test_sgd_interp_requires_zero_optimum(self, np_rng):
        _, _, st, _ = small_problem(np_rng)
        with pytest.raises(ValueError):
            step_size_sgd(st, 5.0, 0.5, 12, 3, 2, 100, 0.1, interpolation=True)
        with pytest.raises(ValueError):
            step_size_sgd(st, 5.0, 0.5, 12, 13, 2, 100, 0.1, epsilon=0.1)


class TestHorizon:
    def test_zero_when_done(self):
        st = spectral_stats(np.eye(2), np.eye(2), np.eye(2))
        assert horizon(st, 0.1, 1, 1.0, 1.0) == 0
        assert horizon(st, 0.1, 1, 1.0, 2.0) == 0

    def test_halving_epsilon(self):
        st = spectral_stats(np.eye(2), np.eye(2), np.eye(2))
        eta = 1e-3
        inc = math.log(2) / (eta / E)
        a = horizon(st, eta, 1, 10.0, 1e-2)
        b = horizon(st, eta, 1, 10.0, 5e-3)
        assert abs((b - a) - inc) <= 1

    def test_formula(self, np_rng):
        _, _, st, _ = small_problem(np_rng)
        rate = 1e-4 * 3 * st.mu_A**2 * st.mu_B**2 * st.sigma_r**2 / E
        assert horizon(st, 1e-4, 3, 7.0, 0.01) == math.ceil(math.log(700) / rate)

    def test_schedule_is_self_consistent(self, np_rng):
        _, data, st, opt = small_problem(np_rng)
        L0 = 0.5 * np.sum(data.Y**2)
        eps = 0.05 * (L0 - opt)
        eta, T = sgd_schedule(st, L0, opt, 12, 3, 2, eps, 1 / 6)
        assert eta == step_size_sgd(st, L0, opt, 12, 3, 2, T, 1 / 6, epsilon=eps)
        assert horizon(st, eta, 2, L0 - opt, eps / 3) <= T


class TestRunGD:
    def test_fixed_point(self, np_rng):
        A, B = build_transforms(TransformSpec("gaussian", 6, 2, 2, seed=1))
        X = np_rng.standard_normal((2, 5))
        p0 = zero_init(A, B, 2)
        data = Dataset(X, B @ A @ X)
        tr = run_gd(p0, data, TrainConfig("GD", 1e-3, 20), 0.0)
        assert np.all(tr.gap <= 1e-24)
        assert np.array_equal(tr.final_W, p0.W)

    def test_matches_numpy_replay(self, np_rng):
        p0, data, st, opt = small_problem(np_rng)
        eta = step_size_gd(st, loss(p0, data), p0.L)
        tr = run_gd(p0, data, TrainConfig("GD", eta, 25), opt)
        p = p0
        losses = []
        for _ in range(26):
            losses.append(loss(p, data))
            p = p.with_weights(p.W - eta * full_gradient(p, data).grads)
        assert np.allclose(tr.loss, losses, rtol=1e-12)
        assert tr.status == "horizon" and tr.steps == 25
        assert list(tr.iters) == list(range(26))

    def test_descent_confinement_and_rate(self, np_rng):
        from dlresnet.transforms import check_gd_condition
        X = np_rng.standard_normal((3, 40))
        data = Dataset(X, -X + 0.1 * np_rng.standard_normal((3, 40)))
        opt = fit_optimum(data).optimal_loss
        L0 = 0.5 * np.sum(data.Y**2)
        A, B = build_transforms(TransformSpec("modified_identity", 8, 3, 3))
        need = check_gd_condition(spectral_stats(A, B, X), L0, opt).rhs
        A, B = build_transforms(TransformSpec("modified_identity", 8, 3, 3, alpha=1.5 * need))
        st = spectral_stats(A, B, X)
        assert check_gd_condition(st, L0, opt).satisfied
        p0 = zero_init(A, B, 3)
        eta = step_size_gd(st, L0, p0.L)
        tr = run_gd(p0, data, TrainConfig("GD", eta, 300), opt)
        assert tr.last_gap < 0.5 * tr.initial_gap
        assert np.all(np.diff(tr.loss) <= 1e-12)
        rho = contraction_rate(st, eta, p0.L)
        g = tr.gap
        ok = g[:-1] > 1e-12
        assert np.all(g[1:][ok] / g[:-1][ok] <= rho + 1e-10)
        assert np.all(tr.gap <= tr.rho_bound * (1 + 1e-8))
        assert np.all(tr.max_w_fro <= 0.5 / p0.L)

    def test_record_every_and_whole_run_stats(self, np_rng):
        p0, data, st, opt = small_problem(np_rng)
        eta = step_size_gd(st, loss(p0, data), p0.L)
        full = run_gd(p0, data, TrainConfig("GD", eta, 53), opt)
        thin = run_gd(p0, data, TrainConfig("GD", eta, 53, record_every=10), opt)
        assert list(thin.iters) == [0, 10, 20, 30, 40, 50, 53]
        assert np.array_equal(thin.loss, full.loss[thin.iters])
        assert thin.best_gap == full.best_gap
        assert thin.max_w_fro_all == full.max_w_fro_all
        assert np.array_equal(thin.final_W, full.final_W)

    def test_early_stop(self, np_rng):
        p0, data, st, opt = small_problem(np_rng)
        eta = step_size_gd(st, loss(p0, data), p0.L)
        ref = run_gd(p0, data, TrainConfig("GD", eta, 400), opt)
        level = 0.5 * ref.initial_gap
        t_hit = ref.first_iter_below(level)
        tr = run_gd(p0, data, TrainConfig("GD", eta, 400, early_stop_gap=level), opt)
        assert tr.status == "early-stop"
        assert tr.steps == t_hit and tr.last_gap <= level

    def test_divergence(self, np_rng):
        p0, data, st, opt = small_problem(np_rng)
        tr = run_gd(p0, data, TrainConfig("GD", 10.0, 200), opt)
        assert tr.status == "diverged"
        assert tr.steps < 200

    def test_wrong_algorithm(self, np_rng):
        p0, data, _, opt = small_problem(np_rng)
        with pytest.raises(ValueError):
            run_gd(p0, data, TrainConfig("SGD", 1e-3, 5, batch_B=2), opt)


def replay_sgd(p0, data, eta, T, Bsz, seed):
    """Independent numpy loop over the same batch stream."""
    gen = rng.generator(seed)
    u = rng.uniforms(gen, (T + 1, Bsz))
    perm = np.arange(data.n, dtype=np.int64)
    p = p0
    losses = []
    for t in range(T):
        losses.append(loss(p, data))
        batch = _kernels_numpy.draw_batch(u[t], perm)
        p = p.with_weights(p.W - eta * minibatch_gradient(p, data, batch).grads)
    losses.append(loss(p, data))
    return np.array(losses), p.W


class TestRunSGD:
    def test_full_batch_is_gd(self, np_rng):
        p0, data, st, opt = small_problem(np_rng)
        eta = step_size_gd(st, loss(p0, data), p0.L)
        gd = run_gd(p0, data, TrainConfig("GD", eta, 100), opt)
        sgd = run_sgd(p0, data, TrainConfig("SGD", eta, 100, batch_B=data.n, seed=9), opt)
        assert np.array_equal(gd.loss, sgd.loss)
        assert np.array_equal(gd.final_W, sgd.final_W)
        assert gd.to_csv() == sgd.to_csv()

    def test_matches_replay(self, np_rng):
        p0, data, st, opt = small_problem(np_rng)
        eta = 0.5 * step_size_gd(st, loss(p0, data), p0.L)
        tr = run_sgd(p0, data, TrainConfig("SGD", eta, 40, batch_B=4, seed=77), opt)
        losses, W = replay_sgd(p0, data, eta, 40, 4, 77)
        assert np.allclose(tr.loss, losses, rtol=1e-10)
        assert np.allclose(tr.final_W, W, rtol=1e-10, atol=1e-16)

    def test_reproducible(self, np_rng):
        p0, data, st, opt = small_problem(np_rng)
        eta = step_size_gd(st, loss(p0, data), p0.L)
        cfg = TrainConfig("SGD", eta, 200, batch_B=3, seed=123)
        a, b = run_sgd(p0, data, cfg, opt), run_sgd(p0, data, cfg, opt)
        assert a.to_csv() == b.to_csv()
        c = run_sgd(p0, data, TrainConfig("SGD", eta, 200, batch_B=3, seed=124), opt)
        assert a.to_csv() != c.to_csv()

    def test_best_gap_tracked(self, np_rng):
        p0, data, st, opt = small_problem(np_rng)
        eta = step_size_gd(st, loss(p0, data), p0.L)
        tr = run_sgd(p0, data, TrainConfig("SGD", eta, 150, batch_B=2, seed=5), opt)
        assert tr.best_gap == pytest.approx(np.min(tr.gap))
        assert tr.gap[list(tr.iters).index(tr.best_iter)] == tr.best_gap

    def test_invalid_batch(self, np_rng):
        p0, data, _, opt = small_problem(np_rng)
        with pytest.raises(ValueError):
            run_sgd(p0, data, TrainConfig("SGD", 1e-3, 5, batch_B=data.n + 1), opt)


@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_sampling_is_uniform_over_pairs(backend):
    from dlresnet import _accel
    kern = _accel.kernels(1, backend)
    n, Bsz, steps = 5, 2, 10_000
    gen = rng.generator(31337)
    u = rng.uniforms(gen, (steps, Bsz))
    perm = np.arange(n, dtype=np.int64)
    pairs = list(combinations(range(n), 2))
    counts = dict.fromkeys(pairs, 0)
    for t in range(steps):
        b = kern.draw_batch(u[t], perm)
        assert len(set(b.tolist())) == Bsz
        counts[tuple(int(i) for i in b)] += 1
    p = 1 / len(pairs)
    se = math.sqrt(steps * p * (1 - p))
    for c in counts.values():
        assert abs(c - steps * p) <= 3 * se


class TestBaseline:
    def test_identity_init_equals_resnet(self, np_rng):
        p0, data, st, opt = small_problem(np_rng)
        eta = step_size_gd(st, loss(p0, data), p0.L)
        W0 = np.stack([np.eye(p0.m)] * p0.L)
        base = run_standard_baseline(p0.A, p0.B, data,
                                     TrainConfig("GD-standard-baseline", eta, 30), p0.L, opt,
                                     W0=W0)
        res = run_gd(p0, data, TrainConfig("GD", eta, 30), opt)
        assert np.allclose(base.loss, res.loss, rtol=1e-11)
        assert np.allclose(base.final_W - np.eye(p0.m), res.final_W, atol=1e-13)

    def test_single_layer_reaches_optimum(self, np_rng):
        A = np.eye(3)
        B = np.eye(3)
        X = np_rng.standard_normal((3, 30))
        data = Dataset(X, -X + 0.1 * np_rng.standard_normal((3, 30)))
        opt = fit_optimum(data).optimal_loss
        eta = 1.0 / np.linalg.norm(X, 2) ** 2
        tr = run_standard_baseline(A, B, data, TrainConfig("GD-standard-baseline", eta, 2000),
                                   1, opt)
        assert tr.last_gap <= 1e-10 * tr.initial_gap

    def test_init_variance(self):
        from dlresnet.trainer import gaussian_hidden_init
        W = gaussian_hidden_init(400, 2, 2.0, seed=3)
        assert W.var() == pytest.approx(4.0 / 400, rel=0.02)


class TestTraceOutput:
    def test_csv_schema(self, np_rng):
        p0, data, st, opt = small_problem(np_rng)
        eta = step_size_gd(st, loss(p0, data), p0.L)
        tr = run_gd(p0, data, TrainConfig("GD", eta, 4), opt)
        rows = list(csv.reader(io.StringIO(tr.to_csv())))
        assert tuple(rows[0]) == CSV_HEADER
        assert [r[-1] for r in rows[1:]] == ["running"] * 4 + ["horizon"]
        assert float(rows[1][1]) == tr.loss[0]  # 17 digits round-trip exactly
        assert float(rows[3][5]) == tr.rho_bound[2]

    def test_json(self, np_rng):
        p0, data, st, opt = small_problem(np_rng)
        eta = step_size_gd(st, loss(p0, data), p0.L)
        d = json.loads(run_gd(p0, data, TrainConfig("GD", eta, 3), opt).to_json())
        assert d["iter"] == [0, 1, 2, 3] and d["status"] == "horizon"

    def test_gap_matches_decomposition(self, np_rng):
        from dlresnet.model import end_to_end
        from dlresnet.optimum import residual_decomposition
        p0, data, st, _ = small_problem(np_rng)
        fit = fit_optimum(data)
        eta = step_size_gd(st, loss(p0, data), p0.L)
        tr = run_gd(p0, data, TrainConfig("GD", eta, 10), fit.optimal_loss)
        _, excess, _ = residual_decomposition(end_to_end(p0.with_weights(tr.final_W)),
                                              data, fit)
        assert tr.gap[-1] == pytest.approx(excess / 2, rel=1e-9)

    @pytest.mark.parametrize("kw", [dict(algorithm="Adam", eta=1.0, T=1),
                                    dict(algorithm="GD", eta=0.0, T=1),
                                    dict(algorithm="GD", eta=math.inf, T=1),
                                    dict(algorithm="SGD", eta=1.0, T=1),
                                    dict(algorithm="GD", eta=1.0, T=1, record_every=0)])
    def test_invalid_config(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)

import math

import numpy as np
import pytest

from admmattack.bo import (
    BoConfig,
    BoDeltaSolver,
    ei_gradient,
    expected_improvement,
)
from admmattack.core import RngStream, box_feasible
from admmattack.gp import GpHyper, GpModel


def mc_expected_improvement(mu, sigma, l_plus, n=10**7, seed=0):
    """Independent Monte Carlo oracle: E[max(l_plus - Y, 0)], Y ~ N(mu, sigma^2)."""
    rng = RngStream(seed)
    y = mu + sigma * rng.standard_normal(n)
    return float(np.mean(np.maximum(l_plus - y, 0.0)))


class TestExpectedImprovement:
    def test_at_incumbent_mean(self):
        # mu == l_plus, sigma = 1: EI = phi(0) = 1/sqrt(2 pi)
        val = expected_improvement(0.0, 1.0, 0.0)
        assert val == pytest.approx(1.0 / math.sqrt(2 * math.pi), abs=1e-12)
        assert val == pytest.approx(0.39894228, abs=1e-8)

    def test_sigma_zero_below_incumbent(self):
        assert expected_improvement(1.0, 0.0, 3.0) == 2.0

    def test_sigma_zero_above_incumbent(self):
        assert expected_improvement(3.0, 0.0, 1.0) == 0.0

    def test_scales_linearly_with_sigma_at_incumbent(self):
        assert expected_improvement(0.0, 2.5, 0.0) == pytest.approx(
            2.5 / math.sqrt(2 * math.pi), abs=1e-12)

    def test_monotone_in_incumbent(self):
        vals = [expected_improvement(0.0, 1.0, lp) for lp in (-1.0, 0.0, 1.0, 2.0)]
        assert vals == sorted(vals)
        assert all(v >= 0.0 for v in vals)

    def test_matches_monte_carlo(self):
        cases = [(0.0, 1.0, 0.0), (1.0, 0.5, 1.2), (-0.3, 2.0, 0.4), (2.0, 0.1, 1.0)]
        for i, (mu, sigma, lp) in enumerate(cases):
            assert expected_improvement(mu, sigma, lp) == pytest.approx(
                mc_expected_improvement(mu, sigma, lp, seed=i), abs=1e-3)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            expected_improvement(0.0, -1.0, 0.0)


class TestEiGradient:
    def fitted_model(self, seed=0, n=12, d=2):
        rng = RngStream(seed)
        X = rng.uniform(-1, 1, (n, d))
        y = np.sin(2 * X[:, 0]) + 0.5 * X[:, -1]
        model = GpModel(d, hyper=GpHyper(theta0=1.0,
                                         lengthscales=np.full(d, 0.8),
                                         noise_var=1e-4))
        model.set_data(X, y)
        return model, y

    def ei_at(self, model, x, l_plus):
        mu, var = model.posterior(x)
        return expected_improvement(mu, math.sqrt(max(var, 0.0)), l_plus)

    def test_matches_finite_differences(self):
        model, y = self.fitted_model()
        l_plus = float(np.min(y))
        rng = RngStream(1)
        step = 1e-6
        for _ in range(10):
            x = rng.uniform(-1, 1, 2)
            g, degenerate = ei_gradient(model, x, l_plus)
            assert not degenerate
            for i in range(2):
                xp = x.copy(); xp[i] += step
                xm = x.copy(); xm[i] -= step
                fd = (self.ei_at(model, xp, l_plus) - self.ei_at(model, xm, l_plus)) / (2 * step)
                assert g[i] == pytest.approx(fd, rel=1e-4, abs=1e-8)

    def test_degenerate_flag_on_zero_variance(self):
        class ZeroVarModel:
            def posterior_with_grad(self, x):
                return 0.5, 0.0, np.ones_like(x), np.zeros_like(x)

        g, degenerate = ei_gradient(ZeroVarModel(), np.array([0.3]), 1.0)
        assert degenerate
        np.testing.assert_array_equal(g, np.zeros(1))


class TestBoDeltaSolver:
    def quadratic_setup(self, d=1, eps=1.0):
        x0 = np.full(d, 0.5)
        target = np.full(d, 0.3)
        f_loss = lambda delta: float(np.sum((delta - target) ** 2))
        return x0, target, f_loss

    def test_finds_1d_quadratic_minimum(self):
        x0, target, f_loss = self.quadratic_setup()
        calls = []

        def counted(delta):
            calls.append(np.array(delta))
            return f_loss(delta)

        solver = BoDeltaSolver(x0, 1.0, BoConfig(init_samples=5, max_bo_iters=15))
        out = solver.step(b=np.zeros(1), rho=0.0, f_loss=counted, rng=RngStream(10))
        assert abs(out[0] - target[0]) < 0.05
        assert len(calls) == 5 + 15

    def test_all_queried_points_feasible(self):
        x0 = np.array([0.05, 0.95, 0.5])
        eps = 0.3
        seen = []

        def f_loss(delta):
            seen.append(np.array(delta))
            return float(np.sum(delta ** 2))

        solver = BoDeltaSolver(x0, eps, BoConfig(init_samples=4, max_bo_iters=8))
        solver.step(b=np.zeros(3), rho=1.0, f_loss=f_loss, rng=RngStream(11))
        assert seen
        for delta in seen:
            assert box_feasible(x0, delta, eps)

    def test_returned_point_feasible_and_best_observed(self):
        x0 = np.array([0.4])
        solver = BoDeltaSolver(x0, 0.5, BoConfig(init_samples=3, max_bo_iters=5))
        b = np.array([0.2])
        rho = 2.0
        f_loss = lambda delta: float((delta[0] - 0.1) ** 2)
        out = solver.step(b=b, rho=rho, f_loss=f_loss, rng=RngStream(12))
        assert box_feasible(x0, out, 0.5)
        targets = solver._targets(b, rho)
        out_target = f_loss(out) + 0.5 * rho * float(np.sum((out - b) ** 2))
        assert out_target == pytest.approx(float(np.min(targets)), abs=1e-12)

    def test_incumbent_non_increasing_across_iters(self):
        x0 = np.full(2, 0.5)
        solver = BoDeltaSolver(x0, 1.0, BoConfig(init_samples=5, max_bo_iters=1))
        f_loss = lambda delta: float(np.sum((delta - 0.2) ** 2))
        b, rho = np.zeros(2), 1.0
        prev = None
        for _ in range(8):
            solver.step(b=b, rho=rho, f_loss=f_loss, rng=RngStream(13))
            best = float(np.min(solver._targets(b, rho)))
            if prev is not None:
                assert best <= prev + 1e-12
            prev = best

    def test_observations_carry_over_between_steps(self):
        x0 = np.array([0.5])
        solver = BoDeltaSolver(x0, 1.0, BoConfig(init_samples=3, max_bo_iters=2))
        f_loss = lambda delta: float(delta[0] ** 2)
        solver.step(b=np.zeros(1), rho=1.0, f_loss=f_loss, rng=RngStream(14))
        n_after_first = len(solver._points)
        solver.step(b=np.full(1, 0.1), rho=1.0, f_loss=f_loss, rng=RngStream(15))
        assert len(solver._points) == n_after_first + 3 + 2

    def test_targets_rederived_under_new_b(self):
        x0 = np.array([0.5])
        solver = BoDeltaSolver(x0, 1.0, BoConfig())
        solver._record(np.array([0.2]), 1.5)
        solver._record(np.array([-0.1]), 0.5)
        b, rho = np.array([0.3]), 4.0
        expected = np.array([1.5 + 2.0 * 0.01, 0.5 + 2.0 * 0.16])
        np.testing.assert_allclose(solver._targets(b, rho), expected, atol=1e-12)

    def test_observation_cap_enforced(self):
        x0 = np.array([0.5])
        cfg = BoConfig(init_samples=5, max_bo_iters=3, max_observations=10)
        solver = BoDeltaSolver(x0, 1.0, cfg)
        f_loss = lambda delta: float(delta[0] ** 2)
        for i in range(4):
            solver.step(b=np.zeros(1), rho=1.0, f_loss=f_loss, rng=RngStream(20 + i))
        assert len(solver._points) == 10
        assert len(solver._f_values) == 10

    def test_best_f_tracks_minimum_raw_value(self):
        solver = BoDeltaSolver(np.array([0.5]), 1.0, BoConfig())
        assert math.isnan(solver.best_f)
        solver._record(np.array([0.1]), 2.0)
        solver._record(np.array([0.2]), -1.0)
        assert solver.best_f == -1.0


def test_config_validation():
    with pytest.raises(ValueError):
        BoConfig(init_samples=0)
    with pytest.raises(ValueError):
        BoConfig(ei_learning_rate=0.0)
    with pytest.raises(ValueError):
        BoConfig(max_bo_iters=-1)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from xsts._rng import stream
from xsts.errors import DomainError, RegimeError
from xsts.factor_process import (Backwards, FactorPath, Fixed, LocalToUnity, Stationary,
                                 check_summation_identity, kernel_sum, mixingale_bound,
                                 mixingale_mc, simulate_local_to_unity, simulate_stationary,
                                 student_t_innovations, summation_identity_terms,
                                 variance_kernel)


class TestStartSpec:
    def test_backwards_example(self):
        # -round(1 * 100) + 0 + 1
        assert Backwards(1.0, 0, 1).tau0(100) == -99

    def test_backwards_path_ends_at_last_panel_period(self):
        path = simulate_stationary(0.5, 1.0, 400, Backwards(1.0, 0, 2), seed=1)
        assert path.tau0 == -398
        assert path.times[-1] == 2
        assert path.covers(1, 2)

    def test_fixed(self):
        assert Fixed(7).tau0(1000) == 7

    def test_upsilon_range(self):
        with pytest.raises(DomainError):
            Backwards(1.5, 0, 1)


class TestSimulateStationary:
    def test_white_noise_autocorrelation(self):
        v = simulate_stationary(0.0, 1.0, 100_000, seed=3).values
        v = v - v.mean()
        assert abs(np.dot(v[1:], v[:-1]) / np.dot(v, v)) < 0.01

    def test_stationary_variance(self):
        # sigma^2 / (1 - rho^2) = 4/3
        v = simulate_stationary(0.5, 1.0, 100_000, init="stationary", seed=4).values
        assert abs(v.var() / (4.0 / 3.0) - 1.0) < 0.02

    def test_recursion_exact(self):
        path = simulate_stationary(0.8, 2.0, 500, seed=5)
        assert path.recursion_residual() < 1e-12
        assert_allclose(path.values, 0.8 * path.lagged + path.innovations, rtol=0, atol=1e-13)

    def test_fixed_init(self):
        path = simulate_stationary(0.3, 1.0, 10, init=2.5, seed=0)
        assert path.levels[0] == 2.5

    def test_lengths(self):
        path = simulate_stationary(0.3, 1.0, 10, seed=0)
        assert path.tau == 10 and path.values.size == 10 and path.innovations.size == 10

    def test_deterministic(self):
        a = simulate_stationary(0.5, 1.0, 50, seed=9)
        b = simulate_stationary(0.5, 1.0, 50, seed=9)
        assert_array_equal(a.levels, b.levels)

    def test_unit_root_rejected(self):
        with pytest.raises(RegimeError, match="simulate_local_to_unity"):
            simulate_stationary(1.0, 1.0, 10)

    def test_short_tau(self):
        with pytest.raises(DomainError):
            simulate_stationary(0.5, 1.0, 1)

    def test_student_t_innovations_unit_variance(self):
        path = simulate_stationary(0.0, 1.0, 200_000, seed=2,
                                   innovations=student_t_innovations(5.0))
        assert abs(path.innovations.var() - 1.0) < 0.03

    def test_student_t_needs_df_above_two(self):
        with pytest.raises(DomainError):
            student_t_innovations(2.0)


class TestSimulateLocalToUnity:
    def test_initial_condition(self):
        # sqrt(400) * 2
        assert simulate_local_to_unity(0.0, 1.0, 400, nu0=2.0, seed=0).levels[0] == 40.0

    def test_random_walk_variance(self):
        tau = 200
        ends = np.array([simulate_local_to_unity(0.0, 1.0, tau, 0.0, seed=stream(8, r)).levels[-1]
                         for r in range(10_000)])
        assert abs(ends.var() / tau - 1.0) < 0.03

    def test_deterministic_limit(self):
        tau, gamma = 100, 1.0
        path = simulate_local_to_unity(gamma, 1e-12, tau, 1.0, seed=0)
        t = np.arange(tau + 1)
        assert_allclose(path.levels, math.sqrt(tau) * np.exp(gamma * t / tau), rtol=1e-6)

    def test_recursion_exact(self):
        path = simulate_local_to_unity(-3.0, 1.0, 300, 0.5, seed=1)
        assert path.tau0 == 0
        assert path.recursion_residual() < 1e-12
        assert path.coefficient == math.exp(-3.0 / 300)


class TestCsv:
    def test_round_trip(self, tmp_path):
        path = simulate_stationary(0.5, 1.0, 30, Backwards(1.0, 0, 2), seed=1)
        f = tmp_path / "f.csv"
        path.to_csv(f)
        back = FactorPath.from_csv(f, Stationary(0.5))
        assert_array_equal(back.levels, path.levels)
        assert_array_equal(back.innovations, path.innovations)
        assert back.tau0 == path.tau0

    def test_first_observation_row(self, tmp_path):
        path = simulate_stationary(0.5, 1.0, 30, Backwards(1.0, 0, 2), seed=1)
        f = tmp_path / "f.csv"
        path.to_csv(f)
        lines = f.read_text().splitlines()
        assert lines[0] == "t,nu,eta"
        # pre-sample level (no innovation), then the first observation at tau0 + 1
        assert lines[1].startswith(f"{path.tau0},") and lines[1].endswith(",")
        assert lines[2].startswith(f"{path.tau0 + 1},")


class TestVarianceKernel:
    def test_gamma_zero(self):
        assert variance_kernel(0.0, 1.0, 0.7) == pytest.approx(0.7, abs=1e-15)

    def test_closed_form(self):
        assert variance_kernel(1.0, 1.0, 1.0) == pytest.approx((1 - math.exp(-2)) / 2, rel=1e-14)
        assert variance_kernel(1.0, 1.0, 1.0) == pytest.approx(0.4323324, abs=1e-7)

    def test_zero_at_origin(self):
        for g in (-2.0, 0.0, 1e-10, 3.0):
            assert variance_kernel(g, 1.3, 0.0) == 0.0

    def test_series_matches_closed_form_near_zero(self):
        g = 1e-8 * 1.01
        exact = -math.expm1(-2 * 0.6 * g) / (2 * g)
        assert variance_kernel(g, 1.0, 0.6) == pytest.approx(exact, rel=1e-12)
        assert variance_kernel(g * 0.99, 1.0, 0.6) == pytest.approx(exact, rel=1e-7)

    def test_domain(self):
        with pytest.raises(DomainError):
            variance_kernel(1.0, 1.0, 1.5)

    def test_kernel_sum_regime(self):
        with pytest.raises(RegimeError):
            kernel_sum(simulate_stationary(0.5, 1.0, 10), 1.0)

    def test_kernel_sum_partial_window(self):
        tau, g = 10_000, 1.0
        vals = [kernel_sum(simulate_local_to_unity(g, 1.0, tau, 0.0, seed=stream(2, r)), 0.8, 0.3)
                for r in range(100)]
        target = variance_kernel(g, 1.0, 0.8) - variance_kernel(g, 1.0, 0.3)
        assert abs(np.mean(vals) / target - 1) < 0.03


class TestMixingale:
    def test_zero_rho(self):
        assert mixingale_bound(0.0, -3) == 0.0

    def test_example_value(self):
        # 0.25 * (1 + 2 * 0.5**6) / 0.75
        assert mixingale_bound(0.5, -2) == pytest.approx(0.34375, rel=1e-14)

    def test_ratio_rate(self):
        r = mixingale_bound(0.8, -41) / mixingale_bound(0.8, -40)
        assert abs(r - 0.8) < 0.01

    @given(st.floats(-0.99, 0.99), st.integers(1, 30))
    def test_decreasing_in_lag(self, rho, k):
        assert mixingale_bound(rho, -(k + 1)) <= mixingale_bound(rho, -k)

    def test_domain(self):
        with pytest.raises(DomainError):
            mixingale_bound(1.0, -1)
        with pytest.raises(DomainError):
            mixingale_bound(0.5, 0)

    def test_monte_carlo_small(self):
        res = mixingale_mc(0.5, -2, n_draws=200_000, seed=1)
        assert abs(res["bound"] - 0.34375) < 4 * res["bound_mc_sd"]
        assert res["exact_norm2"] <= res["bound"]


class TestSummationIdentity:
    def test_hand_path(self):
        path = FactorPath([0.0, 1.0, 2.0], [1.0, 1.0], 0, LocalToUnity(0.0, 2))
        lhs, rhs = summation_identity_terms(path)
        assert lhs == 0.5
        assert rhs == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("gamma", [0.0, 1.0, -5.0])
    def test_seeded_paths(self, gamma):
        path = simulate_local_to_unity(gamma, 1.0, 200, 0.3, seed=11)
        lhs, _ = summation_identity_terms(path)
        assert check_summation_identity(path) < 1e-10 * max(1.0, abs(lhs))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-20, 20), st.integers(2, 500), st.floats(-3, 3), st.integers(0, 2**32))
    def test_property(self, gamma, tau, nu0, seed):
        # the identity is a difference of squared levels; for strongly explosive
        # paths those dwarf the left side, so measure against the largest term
        path = simulate_local_to_unity(gamma, 1.0, tau, nu0, seed=seed)
        scale = max(1.0, np.max(path.levels ** 2) / tau)
        assert check_summation_identity(path) < 1e-10 * scale

    def test_regime(self):
        with pytest.raises(RegimeError):
            check_summation_identity(simulate_stationary(0.5, 1.0, 10))

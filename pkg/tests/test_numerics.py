from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate as sci_integrate
from scipy import special, stats

from quantdemod import numerics
from quantdemod.errors import BracketError, DomainError, EvaluationError


class TestGaussianTails:
    def test_q_function_matches_survival_function(self):
        x = np.linspace(-8, 8, 161)
        np.testing.assert_allclose(numerics.q_function(x), stats.norm.sf(x), rtol=1e-13, atol=1e-300)

    def test_q_at_zero_is_half(self):
        assert numerics.q_function(0.0) == 0.5

    def test_log_q_deep_tail(self):
        x = np.array([10.0, 30.0, 38.0])
        np.testing.assert_allclose(numerics.log_q_function(x), stats.norm.logsf(x), rtol=1e-12)

    def test_interval_mass_against_cdf(self):
        lo = np.array([-3.0, -1.0, 0.5, -np.inf])
        hi = np.array([-2.0, 2.0, 1.5, 0.0])
        expect = stats.norm.cdf(hi) - stats.norm.cdf(lo)
        np.testing.assert_allclose(numerics.interval_mass(lo, hi), expect, rtol=1e-13)

    def test_interval_mass_far_tail_keeps_relative_accuracy(self):
        # mass of (20, 21): naive cdf differences give exactly 0
        want = stats.norm.sf(20.0) - stats.norm.sf(21.0)
        got = float(numerics.interval_mass(20.0, 21.0))
        assert got > 0
        assert got == pytest.approx(want, rel=1e-12)

    def test_log_interval_mass_where_mass_underflows(self):
        # ln P(40 < W < 41) ~ ln sf(40) since the upper end is negligible
        got = float(numerics.log_interval_mass(40.0, 41.0))
        assert got == pytest.approx(stats.norm.logsf(40.0), rel=1e-12)
        got = float(numerics.log_interval_mass(-41.0, -40.0))
        assert got == pytest.approx(stats.norm.logsf(40.0), rel=1e-12)

    @given(st.floats(-6, 6), st.floats(0.01, 4))
    def test_log_interval_mass_consistent(self, lo, width):
        a = float(numerics.log_interval_mass(lo, lo + width))
        b = math.log(float(numerics.interval_mass(lo, lo + width)))
        assert a == pytest.approx(b, rel=1e-10, abs=1e-12)


class TestLogDomain:
    def test_log_sum_exp_matches_scipy(self):
        v = np.array([-1000.0, -999.0, -1001.5])
        assert numerics.log_sum_exp(v) == pytest.approx(special.logsumexp(v), rel=1e-15)

    def test_log_sum_exp_of_generator(self):
        assert numerics.log_sum_exp(x for x in (0.0, 0.0)) == pytest.approx(math.log(2.0))

    def test_log_sum_exp_empty_raises(self):
        with pytest.raises(DomainError):
            numerics.log_sum_exp([])

    def test_log_sum_exp_all_minus_inf(self):
        assert numerics.log_sum_exp([-np.inf, -np.inf]) == -np.inf

    def test_softplus_extremes(self):
        assert float(numerics.softplus(800.0)) == 800.0
        assert float(numerics.softplus(-800.0)) == 0.0
        assert float(numerics.softplus(0.0)) == pytest.approx(math.log(2.0))


class TestQuadrature:
    def test_gauss_hermite_low_moments(self):
        rule = numerics.gauss_hermite(32)
        assert rule.apply(lambda x: np.ones_like(x)) == pytest.approx(1.0, rel=1e-14)
        assert rule.expect(lambda x: x**2) == pytest.approx(1.0, rel=1e-13)
        assert rule.expect(lambda x: x**4) == pytest.approx(3.0, rel=1e-13)
        assert rule.expect(lambda x: x**3) == pytest.approx(0.0, abs=1e-13)

    def test_gauss_hermite_shifted_expectation(self):
        rule = numerics.gauss_hermite(40)
        # E[exp(W)] = e^{1/2}, W ~ N(0, 1); E[Y^2] = mean^2 + std^2
        assert rule.expect(np.exp) == pytest.approx(math.exp(0.5), rel=1e-12)
        assert rule.expect(lambda y: y**2, mean=1.5, std=2.0) == pytest.approx(1.5**2 + 4.0, rel=1e-13)

    def test_rule_rejects_too_few_nodes(self):
        with pytest.raises(DomainError):
            numerics.gauss_hermite(8)

    def test_rule_rejects_nonpositive_weights(self):
        x = np.linspace(0, 1, 16)
        w = np.ones(16)
        w[3] = 0.0
        with pytest.raises(DomainError):
            numerics.QuadratureRule(x, w, "adaptive-panel")

    def test_expect_needs_gaussian_rule(self):
        rule = numerics.panel_rule([0.0, 1.0], order=16)
        with pytest.raises(DomainError):
            rule.expect(np.sin)

    def test_panel_rule_polynomial(self):
        rule = numerics.panel_rule([-1.0, 0.3, 2.0], order=16)
        assert rule.apply(lambda x: x**5) == pytest.approx((2.0**6 - 1.0) / 6.0, rel=1e-13)

    def test_integrate_matches_scipy_quad(self):
        f = lambda y: np.exp(-0.5 * y * y) * np.log1p(np.exp(-2 * y))  # noqa: E731
        want, _ = sci_integrate.quad(f, -30, 30, epsabs=1e-13, epsrel=1e-12, limit=200)
        assert numerics.integrate(f, -30, 30) == pytest.approx(want, rel=1e-11)

    def test_integrate_with_kink(self):
        got = numerics.integrate(np.abs, -1.0, 2.0, breaks=[0.0])
        assert got == pytest.approx(2.5, rel=1e-14)

    def test_integrate_order_context(self):
        with numerics.quadrature_order(32):
            assert numerics.integrate(np.cos, 0.0, 1.0) == pytest.approx(math.sin(1.0), rel=1e-14)
        with pytest.raises(DomainError):
            with numerics.quadrature_order(2):
                pass

    def test_integrate_bad_range(self):
        with pytest.raises(DomainError):
            numerics.integrate(np.cos, 1.0, 0.0)
        with pytest.raises(DomainError):
            numerics.integrate(np.cos, 0.0, np.inf)


class TestSearch:
    def test_maximize_quadratic(self):
        x, fx = numerics.maximize_scalar(lambda t: -(t - 0.3) ** 2 + 2.0, (-1.0, 2.0), tol=1e-10)
        # a quadratic peak is only resolvable to ~sqrt(machine eps) in x
        assert x == pytest.approx(0.3, abs=5e-8)
        assert fx == pytest.approx(2.0, abs=1e-15)

    def test_maximize_boundary_peak(self):
        x, _ = numerics.maximize_scalar(lambda t: t, (0.0, 1.0))
        assert x == pytest.approx(1.0, abs=1e-7)

    def test_maximize_reports_non_finite(self):
        with pytest.raises(EvaluationError) as err:
            numerics.maximize_scalar(lambda t: math.nan, (0.0, 1.0))
        assert math.isnan(err.value.value)

    def test_maximize_empty_bracket(self):
        with pytest.raises(BracketError):
            numerics.maximize_scalar(lambda t: t, (1.0, 1.0))

    def test_find_root(self):
        assert numerics.find_root(lambda t: t**3 - 2.0, (0.0, 2.0)) == pytest.approx(2 ** (1 / 3), abs=1e-12)

    def test_find_root_endpoint(self):
        assert numerics.find_root(lambda t: t, (0.0, 1.0)) == 0.0

    def test_find_root_without_sign_change(self):
        with pytest.raises(BracketError):
            numerics.find_root(lambda t: t * t + 1.0, (-1.0, 1.0))

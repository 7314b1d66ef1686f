import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from berknash.errors import ConfigError, DomainError
from berknash.examples import (
    EXAMPLES,
    example_params,
    gaussian_kl,
    make_example,
    oracle,
    savings_policy,
    truncexp_mean,
    truncexp_mean_factor,
    truncexp_scale_for_mean,
)


class TestMakeExample:
    def test_ar1_truth(self):
        spec = make_example("ar1", {"a0": 0.5, "b0": 1.0})
        assert spec.true_kernel.family == "gaussian-linear"
        assert spec.true_kernel.params["a"] == 0.5 and spec.true_kernel.params["b"] == 1.0

    def test_ar1_action_truth(self):
        spec = make_example("ar1-action", {"c0": -1.0})
        assert spec.true_kernel.params["c"] == -1.0
        assert spec.payoff.kind == "next-state"

    def test_cost_theta_box(self):
        spec = make_example("cost", {"mean": 1.0, "k": 200.0})
        g = spec.theta_grid()
        K = truncexp_mean_factor(200.0)
        assert K == pytest.approx(1.0, abs=1e-12)
        assert g.max() == pytest.approx(math.sqrt((K + 1) / 2) * 1.0 + 1, rel=1e-12)
        assert oracle("cost", {"mean": 1.0, "k": 200.0}).quantities["theta_box"][1] == pytest.approx(2.0)

    def test_cost_requires_mean(self):
        with pytest.raises(ConfigError, match="mean"):
            make_example("cost")

    def test_unknown(self):
        with pytest.raises(ConfigError):
            make_example("nope")
        with pytest.raises(ConfigError, match="zeta"):
            example_params("ar1", {"zeta": 1})

    def test_savings_action_interval(self):
        spec = make_example("savings")
        x = spec.actions.grid(spec.grid.action_points)
        assert x.min() >= 1e-3 and x.max() <= 1 - 1e-3

    @pytest.mark.parametrize("params", [{"beta": 1.0}, {"beta": -0.1}, {"gamma": 0.0}])
    def test_savings_rejects(self, params):
        with pytest.raises((DomainError, ConfigError)):
            make_example("savings", params)

    @pytest.mark.parametrize("eid", EXAMPLES)
    def test_all_build(self, eid):
        params = {"mean": 1.0} if eid in ("cost", "revenue") else {}
        assert make_example(eid, params).name == eid


class TestOracle:
    def test_ar1_variance(self):
        assert oracle("ar1", {"a0": 0.5, "b0": 1.0}).quantities["stationary_variance"] == pytest.approx(4 / 3)

    @pytest.mark.parametrize("a0", [1.0, 1.3, -1.0])
    def test_ar1_no_equilibrium(self, a0):
        assert oracle("ar1", {"a0": a0}).no_equilibrium

    def test_revenue(self):
        q = oracle("revenue", {"mean": 1.0}).quantities
        assert q["theta_star"] == pytest.approx(2.0, rel=1e-12)
        assert q["x_star_slope"] == pytest.approx(1.0, rel=1e-12)

    def test_cost(self):
        q = oracle("cost", {"mean": 2.0}).quantities
        assert q["theta_star"] == pytest.approx(1.0, rel=1e-12)
        assert q["x_star_slope"] == pytest.approx(1.0, rel=1e-12)

    def test_savings_policy(self):
        assert savings_policy(0.5, 0.5, 0.9) == pytest.approx(0.45, rel=1e-14)
        q = oracle("savings", {"beta": 0.5}).quantities
        assert q["beta_m_bracket"] == (0.0, 0.5)

    def test_ar1_action_sign(self):
        assert oracle("ar1-action", {"c0": 2.0}).quantities["optimal_action"] == 1.0
        assert oracle("ar1-action", {"c0": -2.0}).quantities["optimal_action"] == -1.0

    def test_pure(self):
        a = oracle("cost", {"mean": 1.5}).quantities
        b = oracle("cost", {"mean": 1.5}).quantities
        assert a == b


class TestTruncatedExponential:
    @pytest.mark.parametrize("theta,support", [(1.0, 2.0), (0.3, 5.0), (2.0, 1.0)])
    def test_mean_by_quadrature(self, theta, support):
        dens = lambda e: math.exp(-e / theta) / (theta * -math.expm1(-support / theta))  # noqa: E731
        want = integrate.quad(lambda e: e * dens(e), 0, support)[0]
        assert truncexp_mean(theta, support) == pytest.approx(want, rel=1e-10)

    def test_large_support_limit(self):
        assert truncexp_mean(1.5, 1e6) == 1.5

    @settings(max_examples=40, deadline=None)
    @given(mean=st.floats(0.05, 5), ratio=st.floats(2.1, 20))
    def test_scale_inverts_mean(self, mean, ratio):
        support = ratio * mean
        theta = truncexp_scale_for_mean(mean, support)
        assert truncexp_mean(theta, support) == pytest.approx(mean, rel=1e-9)

    def test_mean_factor(self):
        k = 3.0
        # K(k) is the reciprocal of the unit exponential's mean truncated at k
        assert 1.0 / truncexp_mean_factor(k) == pytest.approx(truncexp_mean(1.0, k), rel=1e-12)


def test_gaussian_kl_closed_form():
    assert gaussian_kl(0.5, 1.0, 0.7, 1.0, 1.0) == pytest.approx(0.02, rel=1e-12)
    # KL of N(0, 1) from N(0, 2^2)
    assert gaussian_kl(0.0, 1.0, 0.0, 2.0, 0.0) == pytest.approx(math.log(2) + 1 / 8 - 0.5)

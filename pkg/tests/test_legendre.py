"""Tests for Legendre exponential sums and the averaging over orders."""

import math

import numpy as np
import pytest
from scipy.special import gammainc

from app.src.errors import EstimationError, ParameterDomainError
from app.src.legendre import (
    EstimateKind,
    LegendreSum,
    coefficients,
    estimate_over_orders,
    indicator_approx,
    indicator_l2_error,
    legendre_sum,
    stabilize,
    stabilized_cdf,
    truncated_mean_candidate,
)


def gamma_mgf(shape: float):
    return lambda s: (1.0 + s) ** (-shape)


class TestCoefficients:
    def test_first_order(self):
        coeffs = coefficients(1)
        assert coeffs.order == 1
        assert coeffs.values[0] == pytest.approx(2.0 * (1.0 - math.exp(-1.0)), abs=1e-12)

    def test_exact_and_double_forms_agree(self):
        coeffs = coefficients(12)
        assert len(coeffs.exact) == 12
        np.testing.assert_allclose(coeffs.values, [float(a) for a in coeffs.exact], rtol=1e-12)

    def test_high_orders_stay_healthy(self):
        coeffs = coefficients(25)
        assert coeffs.healthy
        assert np.all(np.isfinite(coeffs.values))
        assert coeffs.magnitudes.max() > 1e10

    @pytest.mark.slow
    def test_order_beyond_double_range_is_unhealthy(self, numerics):
        coeffs = coefficients(420)
        assert not coeffs.healthy
        assert max(coeffs.log_magnitudes) > 709.0
        assert coefficients(400).healthy
        estimate = stabilized_cdf(gamma_mgf(1.5), 2.0, numerics, orders=[10, 420])
        assert estimate.kept_orders == (10,)
        assert estimate.dropped == {420: "unhealthy coefficients"}

    @pytest.mark.parametrize("order", [0, -3, 2.5])
    def test_invalid_order(self, order):
        with pytest.raises(ParameterDomainError):
            coefficients(order)


class TestIndicatorApproximation:
    def test_value_at_origin_bounded(self):
        for m in range(1, 26):
            value = indicator_approx(coefficients(m), 1.0, 0.0)
            assert 0.0 < value < 2.0, f"L_{m}(0) = {value}"

    def test_l2_error_decreases_with_order(self, numerics):
        errors = [indicator_l2_error(m, 1.0, numerics) for m in (5, 10, 20)]
        assert errors[0] > errors[1] > errors[2] > 0

    def test_vector_argument(self):
        values = indicator_approx(coefficients(6), 2.0, np.array([[0.0, 1.0], [2.0, 3.0]]))
        assert values.shape == (2, 2)

    def test_domain(self):
        with pytest.raises(ParameterDomainError):
            indicator_approx(coefficients(3), 0.0, 1.0)
        with pytest.raises(ParameterDomainError):
            indicator_approx(coefficients(3), 1.0, -0.5)


class TestLegendreSum:
    def test_exact_sum_and_bound(self):
        coeffs = coefficients(4)
        values = [0.5, 0.25, 0.125, 0.0625]
        result = legendre_sum(coeffs, values, 1e-10)
        assert result.value == pytest.approx(float(np.dot(coeffs.values, values)), rel=1e-9)
        expected_bound = float(np.sum(coeffs.magnitudes * np.array(values))) * 1e-10
        assert result.rounding_bound == pytest.approx(expected_bound)

    def test_wrong_length(self):
        with pytest.raises(ParameterDomainError):
            legendre_sum(coefficients(3), [1.0, 2.0])

    def test_non_finite_input(self):
        result = legendre_sum(coefficients(2), [1.0, math.nan])
        assert math.isnan(result.value)
        assert result.rounding_bound == math.inf


class TestStabilize:
    def test_drops_values_outside_probability_range(self, numerics):
        estimate = stabilize({5: 0.5, 6: 1.2, 7: 0.52}, EstimateKind.PROBABILITY, numerics)
        assert estimate.kept_orders == (5, 7)
        assert estimate.value == pytest.approx(0.51)
        assert estimate.spread == pytest.approx(0.02)
        assert estimate.dropped == {6: "outside probability range"}

    def test_clamps_within_slack(self, numerics):
        estimate = stabilize({5: -0.03, 6: 0.01}, "probability", numerics)
        assert estimate.kept_values == (0.0, 0.01)
        assert estimate.value == pytest.approx(0.005)

    def test_nonneg_mean_drops_negatives_only(self, numerics):
        estimate = stabilize([(5, -0.1), (6, 3.0), (7, 3.2)], EstimateKind.NONNEG_MEAN, numerics)
        assert estimate.kept_values == (3.0, 3.2)

    def test_rounding_bound_and_health(self, numerics):
        candidates = [
            LegendreSum(5, 0.4, 1.0),
            LegendreSum(6, 0.41, 0.0, healthy=False),
            LegendreSum(7, 0.42, 1e-9),
        ]
        estimate = stabilize(candidates, EstimateKind.PROBABILITY, numerics)
        assert estimate.kept_orders == (7,)
        assert estimate.dropped[5].startswith("rounding bound")
        assert estimate.dropped[6] == "unhealthy coefficients"

    def test_low_orders_far_from_settled_value_are_dropped(self, numerics):
        candidates = {5: 0.4449, 6: 0.4420, 7: 0.4446}
        candidates.update({m: 0.4458 + 1e-5 * (m % 3) for m in range(8, 18)})
        estimate = stabilize(candidates, EstimateKind.PROBABILITY, numerics)
        assert estimate.kept_orders[0] == 8
        assert all(estimate.dropped[m].startswith("pre-convergence gap") for m in (5, 6, 7))
        assert estimate.value == pytest.approx(0.445811, abs=1e-6)

    def test_wide_upper_spread_keeps_low_orders(self, numerics):
        estimate = stabilize({5: 0.42, 6: 0.44, 7: 0.40, 8: 0.50}, EstimateKind.PROBABILITY, numerics)
        assert estimate.kept_orders == (5, 6, 7, 8)
        assert estimate.dropped == {}

    def test_gap_is_relative_for_large_means(self, numerics):
        candidates = {5: 100.01, 6: 100.0, 7: 100.0, 8: 100.0, 9: 100.0}
        estimate = stabilize(candidates, EstimateKind.NONNEG_MEAN, numerics)
        assert estimate.kept_orders == (5, 6, 7, 8, 9)

    def test_few_candidates_skip_convergence_check(self, numerics):
        estimate = stabilize({5: 0.40, 6: 0.45, 7: 0.45}, EstimateKind.PROBABILITY, numerics)
        assert estimate.kept_orders == (5, 6, 7)

    def test_all_filtered(self, numerics):
        with pytest.raises(EstimationError) as excinfo:
            stabilize({5: 1.5, 6: math.inf}, EstimateKind.PROBABILITY, numerics)
        assert excinfo.value.exit_code == 4
        assert set(excinfo.value.diagnostics["dropped"]) == {5, 6}

    def test_describe_lists_every_order(self, numerics):
        estimate = stabilize({5: 0.5, 6: 1.2}, EstimateKind.PROBABILITY, numerics)
        text = estimate.describe()
        assert "m=  5" in text and "m=  6" in text
        assert estimate.diagnostics()["kept_orders"] == [5]


class TestGammaOracles:
    def test_cdf_matches_incomplete_gamma(self, numerics):
        estimate = stabilized_cdf(gamma_mgf(1.5), 2.0, numerics)
        assert estimate.value == pytest.approx(0.738536, abs=1e-3)
        assert min(estimate.kept_values) <= estimate.value <= max(estimate.kept_values)

    def test_stabilized_error_within_worst_candidate(self, numerics):
        oracle = float(gammainc(1.5, 2.0))
        estimate = stabilized_cdf(gamma_mgf(1.5), 2.0, numerics)
        worst = max(abs(v - oracle) for v in estimate.kept_values)
        assert abs(estimate.value - oracle) <= worst + 1e-15

    def test_truncated_mean(self, numerics):
        # integral_0^2 x f(x) dx for Gamma(1.5, 1) is 1.5 P(2.5, 2)
        oracle = 1.5 * float(gammainc(2.5, 2.0))

        def deriv(s: float) -> float:
            return 1.5 * (1.0 + s) ** (-2.5)

        estimate = estimate_over_orders(
            lambda m: truncated_mean_candidate(deriv, 2.0, m), EstimateKind.NONNEG_MEAN, numerics
        )
        assert estimate.value == pytest.approx(oracle, abs=3e-3)

    def test_single_order_gives_raw_candidate(self, numerics):
        estimate = stabilized_cdf(gamma_mgf(1.5), 2.0, numerics, orders=[10])
        assert estimate.orders == (10,)
        assert len(estimate.kept_values) == 1

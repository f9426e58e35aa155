"""Tests for the Markovian steady-state analytics and the exact finite-n solver."""

import itertools
import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import gammainc
from scipy.stats import gamma as gamma_law

from app.src.app_settings import NumericSettings
from app.src.errors import ParameterDomainError, StabilityError, TruncationError
from app.src.marks import DeterministicBatch, DeterministicMark, ExponentialMark, GeometricBatch
from app.src.stationary import (
    Criterion,
    MarkovSystem,
    blocking_closed_form_cdf,
    blocking_closed_form_density,
    blocking_exceedance,
    exceedance_estimate,
    exceedance_p0,
    exceedance_p1,
    exceedance_upper_bound,
    finite_n_steady_state,
    gamma_stationary_cdf,
    integral_equation_residual,
    shot_noise_cdf,
    shot_noise_mgf_neg,
    stabilized_sigma_c1,
    threshold_closed_form_density,
    threshold_closed_form_exceedance,
    utilization,
)


class TestMarkovSystem:
    def test_load_and_utilization(self, exp_system):
        assert exp_system.load == pytest.approx(1.5)
        assert utilization(exp_system) == pytest.approx(0.75)

    def test_unstable_threshold(self):
        with pytest.raises(StabilityError) as excinfo:
            MarkovSystem(3.0, 2.0, ExponentialMark(1.0), 1.5)
        assert excinfo.value.exit_code == 3

    @pytest.mark.parametrize("args", [(0.0, 1.0), (1.0, -2.0), (math.inf, 1.0)])
    def test_invalid_rates(self, args):
        with pytest.raises(ParameterDomainError):
            MarkovSystem(*args, ExponentialMark(1.0))

    def test_threshold_required(self, numerics):
        with pytest.raises(ParameterDomainError):
            exceedance_p0(MarkovSystem(3.0, 2.0, ExponentialMark(1.0)), numerics)


class TestShotNoise:
    def test_deterministic_mark_transform(self, numerics):
        sys = MarkovSystem(1.0, 1.0, DeterministicMark(1.0))
        assert shot_noise_mgf_neg(sys, 1.0, numerics) == pytest.approx(math.exp(-0.796600), abs=1e-6)

    def test_exponential_mark_transform_is_gamma(self, numerics):
        sys = MarkovSystem(3.0, 2.0, ExponentialMark(1.0))
        for s in (0.1, 1.0, 5.0):
            assert shot_noise_mgf_neg(sys, s, numerics) == pytest.approx((1.0 + s) ** -1.5, rel=1e-12)

    def test_gamma_cdf_value(self):
        assert gamma_stationary_cdf(3.0, 2.0, 1.0, 2.0) == pytest.approx(0.738536, abs=1e-6)

    @pytest.mark.parametrize("c", [0.5, 1.0, 2.0, 4.0])
    def test_legendre_cdf_matches_gamma(self, c, numerics):
        sys = MarkovSystem(3.0, 2.0, ExponentialMark(1.0))
        estimate = shot_noise_cdf(sys, c, numerics)
        assert estimate.value == pytest.approx(float(gammainc(1.5, c)), abs=1e-3)

    def test_conditional_mean_below_threshold(self, exp_system, numerics):
        # E[psi | psi <= 2] for Gamma(1.5, 1)
        oracle = 1.5 * gammainc(2.5, 2.0) / gammainc(1.5, 2.0)
        assert stabilized_sigma_c1(exp_system, numerics).value == pytest.approx(oracle, abs=5e-3)


class TestExceedance:
    def test_p0_matches_closed_form(self, exp_system, numerics):
        oracle = threshold_closed_form_exceedance(3.0, 2.0, 1.0, 2.0)
        assert oracle == pytest.approx(0.5391, abs=1e-4)
        assert exceedance_p0(exp_system, numerics) == pytest.approx(oracle, abs=1e-3)

    def test_p1_matches_closed_form(self, exp_system, numerics):
        density = lambda x: threshold_closed_form_density(3.0, 2.0, 1.0, x, 2.0)  # noqa: E731
        below, _ = integrate.quad(lambda x: density(x) * math.exp(-(2.0 - x)), 0.0, 2.0, epsabs=1e-12)
        oracle = below + threshold_closed_form_exceedance(3.0, 2.0, 1.0, 2.0)
        assert exceedance_p1(exp_system, numerics) == pytest.approx(oracle, abs=1e-3)

    def test_blocking_matches_truncated_gamma(self, exp_system, numerics):
        oracle, _ = integrate.quad(
            lambda x: blocking_closed_form_density(3.0, 2.0, 1.0, x, 2.0) * math.exp(-(2.0 - x)),
            0.0,
            2.0,
            epsabs=1e-12,
        )
        assert blocking_exceedance(exp_system, numerics) == pytest.approx(oracle, abs=1e-3)

    def test_upper_bound_value(self, exp_system, numerics):
        bound = exceedance_upper_bound(exp_system, numerics)
        assert bound == pytest.approx(0.6624, abs=1e-4)
        assert bound >= exceedance_p0(exp_system, numerics)

    def test_estimate_reports_orders(self, exp_system, numerics):
        estimate = exceedance_estimate(exp_system, Criterion.P0, numerics)
        assert estimate.orders == numerics.legendre_orders
        assert len(estimate.kept_orders) > 0
        assert min(estimate.kept_values) <= estimate.value <= max(estimate.kept_values)

    def test_bound_and_ordering_grid(self, numerics):
        violations = []
        for mark in (ExponentialMark(1.0), DeterministicMark(1.0)):
            for lam, mu, factor in itertools.product((2.0, 3.0, 5.0), (1.0, 2.0, 3.0), (1.2, 1.5, 2.0)):
                sys = MarkovSystem(lam, mu, mark, factor * lam * mark.mean / mu)
                p0 = exceedance_p0(sys, numerics)
                p1 = exceedance_p1(sys, numerics)
                bound = exceedance_upper_bound(sys, numerics)
                if p1 < p0 or bound < p0:
                    violations.append((mark.to_text(), lam, mu, factor, p0, p1, bound))
        assert violations == []

    def test_exceedance_decreases_in_c(self, numerics):
        base = MarkovSystem(3.0, 2.0, ExponentialMark(1.0))
        values = [exceedance_p0(base.at(c), numerics) for c in (1.7, 2.0, 3.0, 5.0)]
        assert values == sorted(values, reverse=True)


class TestClosedForms:
    def test_threshold_density_integrates_to_one(self):
        below, _ = integrate.quad(lambda x: threshold_closed_form_density(3.0, 2.0, 1.0, x, 2.0), 0.0, 2.0)
        above = threshold_closed_form_exceedance(3.0, 2.0, 1.0, 2.0)
        assert below + above == pytest.approx(1.0, abs=1e-10)

    def test_threshold_density_unstable(self):
        with pytest.raises(StabilityError):
            threshold_closed_form_exceedance(3.0, 2.0, 1.0, 0.7)

    def test_blocking_density_is_truncated_gamma(self):
        expected = gamma_law.pdf(1.0, 1.5) / gammainc(1.5, 2.0)
        assert blocking_closed_form_density(3.0, 2.0, 1.0, 1.0, 2.0) == pytest.approx(expected)
        assert blocking_closed_form_cdf(3.0, 2.0, 1.0, 2.0, 2.0) == pytest.approx(1.0)
        assert blocking_closed_form_cdf(3.0, 2.0, 1.0, 5.0, 2.0) == pytest.approx(1.0)

    def test_blocking_density_support(self):
        with pytest.raises(ParameterDomainError):
            blocking_closed_form_density(3.0, 2.0, 1.0, 2.5, 2.0)

    def test_threshold_integral_equation(self, exp_system, numerics):
        density = lambda x: threshold_closed_form_density(3.0, 2.0, 1.0, x, 2.0)  # noqa: E731
        for x in np.linspace(0.1, 6.0, 20):
            assert abs(integral_equation_residual(exp_system, density, float(x), numerics)) <= 1e-8

    def test_shot_noise_integral_equation(self, numerics):
        sys = MarkovSystem(3.0, 2.0, ExponentialMark(1.0))
        density = lambda x: float(gamma_law.pdf(x, 1.5))  # noqa: E731
        for x in np.linspace(0.1, 8.0, 20):
            assert abs(integral_equation_residual(sys, density, float(x), numerics)) <= 1e-8

    def test_blocking_integral_equation_below_capacity(self, exp_system, numerics):
        density = lambda x: blocking_closed_form_density(3.0, 2.0, 1.0, x, 2.0)  # noqa: E731
        for x in np.linspace(0.1, 1.95, 20):
            assert abs(integral_equation_residual(exp_system, density, float(x), numerics)) <= 1e-8


class TestFiniteN:
    def test_erlang_c(self, numerics):
        steady = finite_n_steady_state(1.0, 1.0, DeterministicBatch(1), 2.0, numerics=numerics)
        assert steady.servers == 2
        assert steady.prob_all_busy == pytest.approx(1.0 / 3.0, abs=1e-9)
        assert steady.prob_batch_overflow == pytest.approx(1.0 / 3.0, abs=1e-9)
        assert steady.mean == pytest.approx(4.0 / 3.0, abs=1e-9)
        assert steady.probabilities.sum() == pytest.approx(1.0)
        assert steady.tail_mass_bound < 1e-12

    def test_geometric_batches_normalised(self, numerics):
        steady = finite_n_steady_state(3.0, 2.0, GeometricBatch(20), 2.0, numerics=numerics)
        assert steady.servers == 40
        assert np.all(steady.probabilities >= 0)
        assert steady.probabilities.sum() == pytest.approx(1.0)
        assert steady.prob_batch_overflow >= steady.prob_exceeds(steady.servers)

    def test_unstable(self, numerics):
        with pytest.raises(StabilityError):
            finite_n_steady_state(3.0, 2.0, DeterministicBatch(10), 1.5, numerics=numerics)

    def test_state_cap(self):
        with pytest.raises(TruncationError) as excinfo:
            finite_n_steady_state(
                3.0, 2.0, DeterministicBatch(100), 1.6, numerics=NumericSettings(finite_n_max_states=50)
            )
        assert excinfo.value.exit_code == 4

    @pytest.mark.slow
    def test_threshold_exceedance_matches_recurrence(self, numerics):
        base = MarkovSystem(3.0, 2.0, DeterministicMark(1.0))
        checked = []
        exact = 1.0
        c = 1.6
        # walk c upward until the exact tail falls below 1e-4
        while c < 12.0:
            steady = finite_n_steady_state(3.0, 2.0, DeterministicBatch(100), c, numerics=numerics)
            exact = steady.prob_exceeds(steady.servers)
            if exact < 1e-4:
                break
            checked.append(c)
            assert exceedance_p0(base.at(c), numerics) == pytest.approx(exact, abs=1e-3), f"c = {c:.2f}"
            c = round(c + 0.15, 2)
        assert exact < 1e-4
        assert checked[0] == 1.6
        assert max(checked) > 4.5

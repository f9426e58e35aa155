"""Tests for mark, batch and service distributions and their transforms."""

import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import exp1

from app.src.errors import ParameterDomainError
from app.src.marks import (
    BinomialBatch,
    DeterministicBatch,
    DeterministicMark,
    DeterministicService,
    ExponentialMark,
    ExponentialService,
    GammaMark,
    GeometricBatch,
    LogNormalMark,
    LogNormalService,
    PoissonBatch,
    ein,
    lognormal_laplace,
    mgf_neg,
    mgf_neg_deriv,
    parse_batch,
    parse_mark,
    parse_service,
)


class TestEin:
    def test_value_at_one(self):
        assert ein(1.0) == pytest.approx(np.euler_gamma + exp1(1.0), abs=1e-14)
        assert ein(1.0) == pytest.approx(0.796600, abs=1e-6)

    def test_series_matches_exponential_integral_form(self):
        for z in (0.05, 0.2, 0.45):
            assert ein(z) == pytest.approx(np.euler_gamma + math.log(z) + exp1(z), rel=1e-12)

    def test_zero_and_vector(self):
        values = ein(np.array([0.0, 0.3, 2.0]))
        assert values[0] == 0.0
        assert values.shape == (3,)
        assert np.all(np.diff(values) > 0)

    def test_negative_argument_rejected(self):
        with pytest.raises(ParameterDomainError):
            ein(-0.1)


class TestMarkTransforms:
    def test_exponential_closed_forms(self):
        mark = ExponentialMark(2.0)
        assert mgf_neg(mark, 1.0) == pytest.approx(2.0 / 3.0)
        assert mgf_neg_deriv(mark, 1.0) == pytest.approx(2.0 / 9.0)
        assert mark.expected_min(1.5) == pytest.approx((1 - math.exp(-3.0)) / 2.0)

    def test_gamma_derivative(self):
        # d/ds of (1 + s)^-2 at s = 1 is -2 / 8
        assert mgf_neg_deriv(GammaMark(2.0, 1.0), 1.0) == pytest.approx(0.25, rel=1e-14)
        assert mgf_neg(GammaMark(2.0, 1.0), 1.0) == pytest.approx(0.25, rel=1e-14)

    def test_gamma_of_shape_one_is_exponential(self, numerics):
        gamma, expo = GammaMark(1.0, 2.0), ExponentialMark(2.0)
        assert gamma.expected_ein(3.0, numerics) == pytest.approx(expo.expected_ein(3.0, numerics), rel=1e-8)
        assert gamma.expected_min(0.7, numerics) == pytest.approx(expo.expected_min(0.7, numerics), rel=1e-12)

    @pytest.mark.parametrize("mark", [DeterministicMark(1.5), ExponentialMark(0.8)])
    def test_closed_form_ein_matches_u_quadrature(self, mark, numerics):
        for s in (0.1, 1.0, 7.5):
            assert mark.expected_ein(s, numerics) == pytest.approx(mark.expected_ein_by_u_quadrature(s, numerics), rel=1e-8)

    def test_zero_argument(self, numerics):
        for mark in (DeterministicMark(1.0), ExponentialMark(1.0), GammaMark(2.0, 3.0), LogNormalMark(1.0, 0.5)):
            assert mark.mgf_neg(0.0, numerics) == pytest.approx(1.0)
            assert mark.expected_ein(0.0, numerics) == 0.0

    def test_negative_argument_rejected(self):
        with pytest.raises(ParameterDomainError):
            mgf_neg(ExponentialMark(1.0), -1.0)


class TestLogNormal:
    def test_laplace_matches_law_expectation(self, numerics):
        mark = LogNormalMark(1.0, 0.5)
        mu, sigma = mark.location_scale
        expected = stats.lognorm.expect(lambda x: math.exp(-x), args=(sigma,), scale=math.exp(mu))
        value = lognormal_laplace(mark, 1.0, "quadrature", numerics)
        assert value.value == pytest.approx(expected, rel=1e-6)
        assert value.rel_error == numerics.quad_rel_tol

    def test_closed_approx_within_documented_error(self, numerics):
        exact = lognormal_laplace((1.0, 0.5), 1.0, "quadrature", numerics)
        approx = lognormal_laplace((1.0, 0.5), 1.0, "closed_approx", numerics)
        assert approx.rel_error == pytest.approx(0.01)
        assert abs(approx.value - exact.value) <= approx.rel_error * exact.value

    def test_unknown_method(self):
        with pytest.raises(ParameterDomainError):
            lognormal_laplace((1.0, 0.5), 1.0, "series")

    def test_moments_and_derivative_at_zero(self, numerics):
        mark = LogNormalMark(2.0, 1.0)
        assert mark.mean == 2.0
        assert mark.second_moment == pytest.approx(5.0)
        assert mark.mgf_neg_deriv(0.0, numerics) == pytest.approx(2.0)

    def test_expected_min_matches_tail_integral(self, numerics):
        mark = LogNormalMark(1.0, 0.5)
        tail, _ = integrate.quad(lambda x: float(mark.sf(x)), 0.0, 1.3, epsabs=1e-12)
        assert mark.expected_min(1.3, numerics) == pytest.approx(tail, rel=1e-8)

    def test_ein_is_consistent_with_u_form(self, numerics):
        mark = LogNormalMark(1.0, 0.5)
        assert mark.expected_ein(2.0, numerics) == pytest.approx(mark.expected_ein_by_u_quadrature(2.0, numerics), rel=1e-7)


class TestBatches:
    def test_geometric_law(self):
        batch = GeometricBatch(100, 2.0)
        assert batch.mean == pytest.approx(50.0)
        assert batch.to_mark() == ExponentialMark(2.0)
        tail = batch.tail(3)
        assert tail[0] == 1.0
        assert tail[2] == pytest.approx(0.98**2)

    def test_geometric_tail_length(self):
        batch = GeometricBatch(50)
        length = batch.tail_length(1e-9)
        assert (1 - batch.success_prob) ** length < 1e-9

    def test_tail_sums_to_mean(self):
        for batch in (PoissonBatch(20), BinomialBatch(30, 0.4), DeterministicBatch(7)):
            assert float(np.sum(batch.tail(400))) == pytest.approx(batch.mean, rel=1e-9)

    def test_limits(self):
        assert DeterministicBatch(10).to_mark() == DeterministicMark(1.0)
        assert BinomialBatch(10, 0.3).to_mark() == DeterministicMark(0.3)

    def test_sample_mean(self):
        rng = np.random.default_rng(7)
        draws = GeometricBatch(40).sample(rng, 200_000)
        assert draws.dtype == np.int64
        assert draws.min() >= 1
        assert draws.mean() == pytest.approx(40.0, rel=0.01)

    def test_invalid_batch_parameters(self):
        with pytest.raises(ParameterDomainError):
            GeometricBatch(1, 2.0)
        with pytest.raises(ParameterDomainError):
            DeterministicBatch(0)
        with pytest.raises(ParameterDomainError):
            BinomialBatch(5, 1.5)


class TestServices:
    def test_exponential(self):
        service = ExponentialService(4.0)
        assert service.mean == 0.25
        assert service.integral_sf_squared() == 0.125

    def test_deterministic(self):
        assert DeterministicService(3.0).integral_sf_squared() == 3.0

    def test_lognormal_squared_tail(self, numerics):
        service = LogNormalService(1.0, 0.5)
        direct, _ = integrate.quad(lambda x: float(service.sf(x)) ** 2, 0.0, np.inf, epsabs=1e-12, limit=200)
        assert service.integral_sf_squared(numerics) == pytest.approx(direct, rel=1e-6)


class TestParsing:
    def test_marks(self):
        assert parse_mark("det:1") == DeterministicMark(1.0)
        assert parse_mark("exp:1.0") == ExponentialMark(1.0)
        assert parse_mark("lognormal:1,0.5") == LogNormalMark(1.0, 0.5)
        assert parse_mark(GammaMark(1.5, 2.0).to_text()) == GammaMark(1.5, 2.0)

    def test_batches_and_services(self):
        assert parse_batch("geo", 10) == GeometricBatch(10, 1.0)
        assert parse_batch("binomial:0.5", 8) == BinomialBatch(8, 0.5)
        assert parse_service("exp:60") == ExponentialService(60.0)

    @pytest.mark.parametrize("text", ["weibull:1", "exp:1,2", "exp:x", "exp:-1", "lognormal:1"])
    def test_bad_marks(self, text):
        with pytest.raises(ParameterDomainError):
            parse_mark(text)

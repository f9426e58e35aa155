"""Tests for the staffing ratio search and the normal approximations."""

from types import SimpleNamespace

import pytest

from app.src import staffing
from app.src.app_settings import NumericSettings
from app.src.errors import NonMonotoneError, ParameterDomainError, SolverError
from app.src.marks import DeterministicMark, ExponentialMark, ExponentialService
from app.src.staffing import (
    mmn_infinite_normal_staff,
    normal_approx_ratio,
    solve_ratio,
    staff_count,
)
from app.src.stationary import Criterion, MarkovSystem, exceedance_estimate


class TestStaffCount:
    @pytest.mark.parametrize(
        "c, n, expected",
        [(2.5, 100, 250), (2.71, 1000, 2710), (1.0001, 100, 101), (0.3, 10, 3)],
    )
    def test_ceiling(self, c, n, expected):
        assert staff_count(c, n) == expected

    def test_invalid(self):
        with pytest.raises(ParameterDomainError):
            staff_count(1.5, 0)
        with pytest.raises(ParameterDomainError):
            staff_count(0.0, 10)


class TestNormalApproximations:
    def test_square_root_ratio(self):
        ratio = normal_approx_ratio(100.0, ExponentialService(1.0), DeterministicMark(1.0), 0.001)
        assert ratio == pytest.approx(121.85, abs=0.01)

    def test_unit_batches_are_poisson(self):
        assert mmn_infinite_normal_staff(100.0, 1.0, 1, 0.001) == pytest.approx(100 + 3.090232 * 10.0, abs=1e-4)

    def test_large_batches_approach_ratio(self):
        n = 1_000_000
        per_n = mmn_infinite_normal_staff(100.0, 1.0, n, 0.001) / n
        ratio = normal_approx_ratio(100.0, ExponentialService(1.0), DeterministicMark(1.0), 0.001)
        assert per_n == pytest.approx(ratio, rel=1e-5)

    @pytest.mark.parametrize("epsilon", [0.0, 1.0, -0.1])
    def test_epsilon_domain(self, epsilon):
        with pytest.raises(ParameterDomainError):
            mmn_infinite_normal_staff(1.0, 1.0, 10, epsilon)


class TestSolveRatio:
    def test_target_is_active(self, fast_numerics):
        result = solve_ratio(3.0, 2.0, ExponentialMark(1.0), 0.01, Criterion.P0, fast_numerics)
        assert result.achieved <= 0.01
        assert result.ratio > result.load
        base = MarkovSystem(3.0, 2.0, ExponentialMark(1.0))
        below = exceedance_estimate(base.at(result.ratio - 2 * fast_numerics.solver_tol), Criterion.P0, fast_numerics)
        assert below.value > 0.01

    def test_evaluation_log(self, fast_numerics):
        result = solve_ratio(3.0, 2.0, ExponentialMark(1.0), 0.01, Criterion.P0, fast_numerics)
        phases = {e.phase for e in result.evaluations}
        assert phases == {"bracket", "bisect"}
        assert result.evaluations[0].c == pytest.approx(1.5 * (1 + fast_numerics.bracket_margin))
        assert result.to_dict()["criterion"] == "p0"

    def test_staff_filled_for_batch_index(self, fast_numerics):
        result = solve_ratio(3.0, 2.0, ExponentialMark(1.0), 0.01, "p0", fast_numerics, n=100)
        assert result.n == 100
        assert result.staff == staff_count(result.ratio, 100)

    def test_p1_needs_more_staff(self, fast_numerics):
        p0 = solve_ratio(20.0, 10.0, DeterministicMark(1.0), 0.001, Criterion.P0, fast_numerics)
        p1 = solve_ratio(20.0, 10.0, DeterministicMark(1.0), 0.001, Criterion.P1, fast_numerics)
        assert p1.ratio >= p0.ratio

    def test_sublinear_in_arrival_rate(self, fast_numerics):
        single = solve_ratio(20.0, 10.0, DeterministicMark(1.0), 0.001, Criterion.P0, fast_numerics)
        double = solve_ratio(40.0, 10.0, DeterministicMark(1.0), 0.001, Criterion.P0, fast_numerics)
        assert double.ratio < 2 * single.ratio

    def test_blocking_criterion(self, fast_numerics):
        result = solve_ratio(3.0, 2.0, ExponentialMark(1.0), 0.05, Criterion.BLOCKING, fast_numerics)
        assert result.achieved <= 0.05

    def test_bracket_exhausted(self):
        numerics = NumericSettings(max_bracket_doublings=0, legendre_orders=(10, 12), workers=1)
        with pytest.raises(SolverError) as excinfo:
            solve_ratio(3.0, 2.0, ExponentialMark(1.0), 1e-6, Criterion.P0, numerics)
        assert excinfo.value.exit_code == 3

    def test_non_monotone_exceedance(self, monkeypatch, fast_numerics):
        def rising(sys, criterion, numerics, orders):
            return SimpleNamespace(value=min(1.0, 0.1 * sys.c), spread=0.0)

        monkeypatch.setattr(staffing, "exceedance_estimate", rising)
        with pytest.raises(NonMonotoneError):
            solve_ratio(3.0, 2.0, ExponentialMark(1.0), 0.01, Criterion.P0, fast_numerics)

    def test_invalid_epsilon(self, fast_numerics):
        with pytest.raises(ParameterDomainError):
            solve_ratio(3.0, 2.0, ExponentialMark(1.0), 1.5, Criterion.P0, fast_numerics)

"""Tests for the batch-queue and storage simulators."""

import numpy as np
import pytest
from scipy.special import gammainc

from app.src.app_settings import NumericSettings
from app.src.errors import ParameterDomainError, UnsupportedConfigurationError
from app.src.marks import (
    DeterministicBatch,
    DeterministicService,
    ExponentialMark,
    ExponentialService,
    GeometricBatch,
)
from app.src.scenarios import convergence_study
from app.src.simkit import (
    DependenceMode,
    Discipline,
    NonhomogeneousArrivals,
    PoissonArrivals,
    QueueSpec,
    StorageSpec,
    StorageVariant,
    busy_fraction,
    dependence_study,
    empirical_cdf,
    finite_jump,
    grid_paths_frame,
    ks_distance,
    ks_distance_to_cdf,
    paths_frame,
    sample_dependent_services,
    simulate_queue,
    simulate_storage,
    summary_frame,
    threshold_drain,
    threshold_hitting_time,
)
from app.src.simkit.seeding import block_bounds, replication_rng
from app.src.simkit.storage import _shot_noise_level
from app.src.stationary import MarkovSystem, blocking_closed_form_cdf, blocking_exceedance


def delay_spec(n: int = 5, servers: int = 8, rate: float = 1.0) -> QueueSpec:
    return QueueSpec(PoissonArrivals(rate), DeterministicBatch(n), ExponentialService(1.0), servers=servers)


class TestSeeding:
    def test_streams_are_reproducible(self):
        a = replication_rng(42, 3).uniform(size=5)
        b = replication_rng(42, 3).uniform(size=5)
        c = replication_rng(42, 4).uniform(size=5)
        np.testing.assert_array_equal(a, b)
        assert not np.allclose(a, c)

    def test_block_bounds(self):
        assert block_bounds(10, 4) == [range(0, 4), range(4, 8), range(8, 10)]
        assert block_bounds(3, 0) == [range(0, 1), range(1, 2), range(2, 3)]

    def test_worker_count_does_not_change_results(self):
        numerics = NumericSettings(replication_block=32)
        one = simulate_queue(delay_spec(), 5.0, 200, 11, numerics=numerics, workers=1)
        four = simulate_queue(delay_spec(), 5.0, 200, 11, numerics=numerics, workers=4)
        np.testing.assert_array_equal(one.terminal, four.terminal)

    def test_seed_changes_results(self):
        first = simulate_queue(delay_spec(), 5.0, 200, 1, workers=1)
        second = simulate_queue(delay_spec(), 5.0, 200, 2, workers=1)
        assert not np.array_equal(first.terminal, second.terminal)


class TestQueues:
    def test_infinite_servers_reach_poisson_mean(self):
        spec = QueueSpec(PoissonArrivals(3.0), DeterministicBatch(1), ExponentialService(2.0))
        assert spec.discipline == Discipline.INFINITE
        result = simulate_queue(spec, 10.0, 20_000, 5, workers=1)
        assert result.mean == pytest.approx(1.5, abs=0.05)
        assert result.variance == pytest.approx(1.5, abs=0.1)

    def test_scaled_by_batch_index(self):
        result = simulate_queue(delay_spec(n=5), 3.0, 50, 3, workers=1)
        np.testing.assert_allclose(result.scaled_terminal, result.terminal / 5)

    def test_engines_agree(self):
        spec = delay_spec(n=5, servers=8)
        reps = 4000
        exact = simulate_queue(spec, 6.0, reps, 21, workers=1)
        job_level = simulate_queue(spec, 6.0, reps, 22, track_busy=True, workers=1)
        stderr = np.sqrt((exact.variance + job_level.variance) / reps)
        assert abs(exact.mean - job_level.mean) < 4 * stderr

    def test_blocking_respects_capacity(self):
        spec = QueueSpec(
            PoissonArrivals(3.0), GeometricBatch(4), ExponentialService(1.0), servers=6, discipline=Discipline.PARTIAL_BLOCKING
        )
        result = simulate_queue(spec, 5.0, 500, 8, workers=1)
        assert result.terminal.max() <= 6
        tracked = simulate_queue(spec, 5.0, 50, 8, track_busy=True, workers=1)
        assert tracked.terminal.max() <= 6
        assert 0 < tracked.busy_fraction <= 1

    def test_grid_paths(self):
        grid = np.linspace(0.0, 4.0, 5)
        result = simulate_queue(delay_spec(), 4.0, 20, 9, grid=grid, workers=1)
        assert result.paths.shape == (20, 5)
        assert np.all(result.paths[:, 0] == 0)
        frame = grid_paths_frame(result)
        assert list(frame.columns[:2]) == ["time", "rep0"]
        assert len(frame) == 5

    def test_event_records(self):
        result = simulate_queue(delay_spec(), 3.0, 10, 4, record_paths=2, workers=1)
        frame = paths_frame(result.path_records)
        assert set(frame["replication"]) <= {0, 1}
        assert frame.iloc[0]["event"] == "initial"

    def test_fixed_epochs(self):
        spec = QueueSpec(PoissonArrivals(1.0), DeterministicBatch(3), ExponentialService(1e-9))
        result = simulate_queue(spec, 2.0, 5, 0, fixed_epochs=[0.5, 1.0, 3.0], workers=1)
        np.testing.assert_array_equal(result.terminal, np.full(5, 6.0))

    def test_nonhomogeneous_arrivals(self):
        arrivals = NonhomogeneousArrivals(lambda t: 2.0 if t < 1.0 else 0.0, 2.0)
        spec = QueueSpec(arrivals, DeterministicBatch(1), DeterministicService(100.0))
        result = simulate_queue(spec, 3.0, 4000, 6, workers=1)
        assert result.mean == pytest.approx(2.0, abs=0.1)

    def test_busy_fraction_needs_servers(self):
        spec = QueueSpec(PoissonArrivals(1.0), DeterministicBatch(1), ExponentialService(1.0))
        with pytest.raises(UnsupportedConfigurationError):
            busy_fraction(spec, 5.0, 2, 0)

    def test_invalid_run(self):
        with pytest.raises(ParameterDomainError):
            simulate_queue(delay_spec(), 0.0, 10, 0)
        with pytest.raises(ParameterDomainError):
            simulate_queue(delay_spec(), 1.0, 0, 0)
        with pytest.raises(ParameterDomainError):
            simulate_queue(delay_spec(), 1.0, 5, 0, grid=[0.5, 2.0])

    def test_invalid_spec(self):
        with pytest.raises(ParameterDomainError):
            QueueSpec(PoissonArrivals(1.0), DeterministicBatch(1), ExponentialService(1.0), servers=0)
        with pytest.raises(ParameterDomainError):
            QueueSpec(
                PoissonArrivals(1.0), DeterministicBatch(1), ExponentialService(1.0), servers=3, dependence_rho=1.5
            )

    def test_summary_frame(self):
        result = simulate_queue(delay_spec(), 3.0, 100, 2, workers=1)
        frame = summary_frame(result, [1.0, 2.0])
        stats = dict(zip(frame["statistic"], frame["value"]))
        assert stats["reps"] == 100
        assert stats["mean"] == pytest.approx(result.mean)
        assert "ecdf@2" in stats


class TestDependence:
    @pytest.mark.parametrize(
        "mode", [DependenceMode.COPY_FIRST, DependenceMode.COPY_PREVIOUS, DependenceMode.AVERAGE_PREVIOUS]
    )
    def test_full_dependence_repeats_first_draw(self, mode):
        draws = sample_dependent_services(mode, 1.0, 6, ExponentialService(1.0), np.random.default_rng(1))
        np.testing.assert_allclose(draws, np.full(6, draws[0]))

    def test_independent_ignores_rho(self):
        rng_a, rng_b = np.random.default_rng(5), np.random.default_rng(5)
        draws = sample_dependent_services("independent", 0.9, 4, ExponentialService(1.0), rng_a)
        np.testing.assert_array_equal(draws, ExponentialService(1.0).sample(rng_b, 4))

    def test_domain(self):
        with pytest.raises(ParameterDomainError):
            sample_dependent_services("copy_first", 1.2, 3, ExponentialService(1.0), np.random.default_rng(0))
        with pytest.raises(ParameterDomainError):
            sample_dependent_services("mirror", 0.5, 3, ExponentialService(1.0), np.random.default_rng(0))

    def test_study_shares_epochs(self):
        frame = dependence_study(n=20, rhos=(0.0, 1.0), horizon=4.0, grid_points=9, seed=3)
        assert list(frame.columns)[0] == "time"
        assert len(frame.columns) == 1 + 3 * 2
        assert len(frame) == 9
        # rho = 0 makes every mode the same independent run
        zero = [col for col in frame.columns if col.endswith("rho=0")]
        for col in zero[1:]:
            np.testing.assert_allclose(frame[col], frame[zero[0]])


class TestStorage:
    def test_threshold_drain(self):
        assert float(threshold_hitting_time(3.0, 2.0, 1.0)) == pytest.approx(0.5)
        assert float(threshold_drain(3.0, 0.25, 2.0, 1.0)) == pytest.approx(2.5)
        assert float(threshold_drain(3.0, 1.5, 2.0, 1.0)) == pytest.approx(2.0 * np.exp(-1.0))
        assert float(threshold_drain(1.0, 1.0, 2.0, 1.0)) == pytest.approx(np.exp(-1.0))

    def test_finite_jump(self):
        np.testing.assert_allclose(finite_jump([1.5, 0.5], [1.0, 1.0], 2.0), [2.0, 1.5])

    def test_shot_noise_is_gamma(self):
        spec = StorageSpec(PoissonArrivals(3.0), ExponentialMark(1.0), ExponentialService(2.0))
        result = simulate_storage(spec, 10.0, 20_000, 12, workers=1)
        assert result.mean == pytest.approx(1.5, abs=0.05)
        assert ks_distance_to_cdf(result.terminal, lambda x: gammainc(1.5, np.maximum(x, 0.0))) < 0.015

    def test_shot_noise_level_sums_decayed_marks(self):
        spec = StorageSpec(PoissonArrivals(1.0), ExponentialMark(1.0), ExponentialService(1.0), initial_level=1.0)
        times = np.array([[1.0, 2.0, 0.0], [0.5, 0.0, 0.0]])
        filled = np.array([[True, True, False], [True, False, False]])
        marks = np.array([[2.0, 3.0, 0.0], [4.0, 0.0, 0.0]])
        t = np.array([[1.5, 3.0], [0.25, 0.5]])
        level = _shot_noise_level(spec, t, times, filled, marks)
        expected = np.array(
            [
                [np.exp(-1.5) + 2 * np.exp(-0.5), np.exp(-3.0) + 2 * np.exp(-2.0) + 3 * np.exp(-1.0)],
                [np.exp(-0.25), np.exp(-0.5) + 4.0],
            ]
        )
        np.testing.assert_allclose(level, expected, rtol=1e-14)

    def test_shot_noise_paths_on_long_horizon(self):
        spec = StorageSpec(PoissonArrivals(50.0), ExponentialMark(1.0), ExponentialService(2.0))
        result = simulate_storage(spec, 40.0, 64, 21, grid=np.linspace(0.0, 40.0, 401), workers=1)
        assert result.paths.shape == (64, 401)
        np.testing.assert_allclose(result.paths[:, -1], result.terminal, rtol=1e-12)
        assert (result.paths[:, 0] == 0.0).all()

    def test_finite_storage_is_truncated_gamma(self):
        spec = StorageSpec(
            PoissonArrivals(3.0), ExponentialMark(1.0), ExponentialService(2.0), StorageVariant.FINITE, threshold=2.0
        )
        result = simulate_storage(spec, 10.0, 20_000, 13, workers=1)
        assert result.terminal.max() <= 2.0 + 1e-12
        cdf = lambda x: blocking_closed_form_cdf(3.0, 2.0, 1.0, x, 2.0)  # noqa: E731
        assert ks_distance_to_cdf(result.terminal, cdf) < 0.015

    def test_threshold_mean_identity(self):
        spec = StorageSpec(
            PoissonArrivals(3.0), ExponentialMark(1.0), ExponentialService(2.0), StorageVariant.THRESHOLD, threshold=2.0
        )
        result = simulate_storage(spec, 20.0, 20_000, 14, workers=1)
        assert float(np.mean(np.minimum(result.terminal, 2.0))) == pytest.approx(1.5, rel=0.01)

    def test_bounded_variants_need_exponential_service(self):
        spec = StorageSpec(
            PoissonArrivals(1.0), ExponentialMark(1.0), DeterministicService(1.0), StorageVariant.THRESHOLD, threshold=2.0
        )
        with pytest.raises(UnsupportedConfigurationError):
            simulate_storage(spec, 1.0, 10, 0)

    def test_storage_spec_validation(self):
        with pytest.raises(ParameterDomainError):
            StorageSpec(PoissonArrivals(1.0), ExponentialMark(1.0), ExponentialService(1.0), StorageVariant.FINITE)
        with pytest.raises(ParameterDomainError):
            StorageSpec(
                PoissonArrivals(1.0),
                ExponentialMark(1.0),
                ExponentialService(1.0),
                StorageVariant.FINITE,
                threshold=1.0,
                initial_level=2.0,
            )


class TestStatistics:
    def test_empirical_cdf(self):
        np.testing.assert_allclose(empirical_cdf([1, 2, 3, 4], [0, 2, 4]), [0.0, 0.5, 1.0])

    def test_ks_distance(self):
        assert ks_distance([1, 2, 3], [1, 2, 3]) == 0.0
        assert ks_distance([0, 0], [1, 1]) == 1.0
        with pytest.raises(ParameterDomainError):
            ks_distance([], [1.0])


@pytest.mark.slow
class TestLimitAcceptance:
    def test_delay_queue_converges_to_threshold_storage(self):
        frame = convergence_study(3.0, 2.0, 2.0, "geo:1", (10, 50, 500), 10.0, 10_000, 20190601)
        ks = frame.set_index("n")["ks_distance"]
        assert ks[10] > ks[500]
        assert ks[500] <= 0.03

    def test_blocking_queue_is_truncated_gamma(self):
        frame = convergence_study(
            3.0, 2.0, 2.0, "geo:1", (500,), 10.0, 10_000, 7, discipline=Discipline.PARTIAL_BLOCKING
        )
        assert frame["ks_to_closed_form"].iloc[0] <= 0.03

    def test_blocking_exceedance_matches_finite_storage(self, numerics):
        spec = StorageSpec(
            PoissonArrivals(3.0), ExponentialMark(1.0), ExponentialService(2.0), StorageVariant.FINITE, threshold=2.0
        )
        reps = 1_000_000
        result = simulate_storage(spec, 10.0, reps, 31)
        marks = ExponentialMark(1.0).sample(np.random.default_rng(32), reps)
        simulated = float(np.mean(result.terminal + marks > 2.0))
        analytic = blocking_exceedance(MarkovSystem(3.0, 2.0, ExponentialMark(1.0), 2.0), numerics)
        assert analytic == pytest.approx(simulated, abs=5e-3)

    def test_busy_fraction_matches_utilization(self):
        spec = QueueSpec(PoissonArrivals(3.0), GeometricBatch(500), ExponentialService(2.0), servers=1000)
        fraction = busy_fraction(spec, 100.0, 32, 5)
        assert fraction == pytest.approx(0.75, abs=0.01)

"""Table, fleet-growth, hourly-profile and convergence runs over scenarios."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..app_settings import NumericSettings, resolve_numerics
from ..errors import ParameterDomainError, StaffingError
from ..marks import ExponentialMark, ExponentialService, MarkDistribution, parse_batch
from ..simkit import (
    Discipline,
    PoissonArrivals,
    QueueSpec,
    StorageSpec,
    StorageVariant,
    ks_distance,
    ks_distance_to_cdf,
    simulate_queue,
    simulate_storage,
)
from ..staffing import solve_ratio, staff_count
from ..stationary import Criterion, blocking_closed_form_cdf, gamma_stationary_cdf
from ..workers import WorkerPool
from .scenario import MilesMode, Scenario

logger = logging.getLogger(__name__)

TABLE_CRITERIA = (Criterion.P0, Criterion.P1)


@dataclass(frozen=True)
class ScenarioRow:
    """One solved table row."""

    label: str
    lambda_per_hour: float
    mu_per_hour: float
    mark_mean: float
    ratios: Dict[str, float]
    staff: Dict[int, int] = field(default_factory=dict)
    alternate_days: Optional[int] = None
    alternate_ratios: Dict[str, float] = field(default_factory=dict)

    def utilization(self, criterion: str) -> float:
        """lambda E[M] / (c mu) at the solved ratio."""
        return self.lambda_per_hour * self.mark_mean / (self.ratios[criterion] * self.mu_per_hour)


def _solve(rate: float, scenario: Scenario, criterion: Criterion, numerics: NumericSettings) -> float:
    return solve_ratio(rate, scenario.service_rate, scenario.mark, scenario.epsilon, criterion, numerics).ratio


def _table_row(scenario: Scenario, n_list: Sequence[int], numerics: NumericSettings) -> ScenarioRow:
    try:
        rate = scenario.arrival_rate()
        ratios = {c.value: _solve(rate, scenario, c, numerics) for c in TABLE_CRITERIA}
        alternate_days = None
        alternate: Dict[str, float] = {}
        if scenario.mode == MilesMode.ANNUAL:
            alternate_days = 365 if scenario.days_per_year == 360 else 360
            alt_rate = scenario.arrival_rate(alternate_days)
            alternate = {c.value: _solve(alt_rate, scenario, c, numerics) for c in TABLE_CRITERIA}
    except StaffingError as e:
        logger.error(f"Row '{scenario.label}' failed: {e.message}")
        raise e.add_context(f"row '{scenario.label}'")

    primary = ratios.get(scenario.criterion.value)
    if primary is None:
        primary = _solve(rate, scenario, scenario.criterion, numerics)
    row = ScenarioRow(
        label=scenario.label,
        lambda_per_hour=rate,
        mu_per_hour=scenario.service_rate,
        mark_mean=scenario.mark.mean,
        ratios=ratios,
        staff={n: staff_count(primary, n) for n in n_list},
        alternate_days=alternate_days,
        alternate_ratios=alternate,
    )
    logger.info(f"{row.label}: lambda={rate:.1f}/hr c_p0={ratios['p0']:.3f} c_p1={ratios['p1']:.3f}")
    return row


def run_table(
    scenarios: Sequence[Scenario],
    numerics: Optional[NumericSettings] = None,
    workers: Optional[int] = None,
    n_list: Optional[Sequence[int]] = None,
) -> List[ScenarioRow]:
    """
    Solve p0 and p1 ratios for every annual-miles or direct-rate scenario.

    Rows are solved in parallel and returned in input order. Annual-miles
    rows also carry both ratios under the other day-count convention.

    Raises:
        StaffingError: The first failing row, with its label in the message
    """
    numerics = resolve_numerics(numerics)
    for scenario in scenarios:
        if scenario.mode not in (MilesMode.ANNUAL, MilesMode.RATE):
            raise ParameterDomainError(f"Scenario '{scenario.name}' is not a table row ({scenario.mode.value} demand)")
    return WorkerPool.map_ordered(
        lambda s: _table_row(s, tuple(n_list if n_list is not None else s.n_list), numerics),
        scenarios,
        numerics,
        workers,
    )


def table_frame(rows: Sequence[ScenarioRow]) -> pd.DataFrame:
    """
    Rows as a frame with the stable column order.

    label, lambda_per_hour, c_p0, c_p1, util_p0, util_p1, staff_n<k>...,
    then the other-convention ratios, mu_per_hour and mark_mean.
    """
    n_values = sorted({n for row in rows for n in row.staff})
    records = []
    for row in rows:
        record: Dict[str, object] = {
            "label": row.label,
            "lambda_per_hour": row.lambda_per_hour,
            "c_p0": row.ratios["p0"],
            "c_p1": row.ratios["p1"],
            "util_p0": row.utilization("p0"),
            "util_p1": row.utilization("p1"),
        }
        for n in n_values:
            record[f"staff_n{n}"] = row.staff.get(n)
        record["alt_days_per_year"] = row.alternate_days
        record["c_p0_alt_days"] = row.alternate_ratios.get("p0", math.nan)
        record["c_p1_alt_days"] = row.alternate_ratios.get("p1", math.nan)
        record["mu_per_hour"] = row.mu_per_hour
        record["mark_mean"] = row.mark_mean
        records.append(record)
    return pd.DataFrame.from_records(records)


def _zero_demand_ratio(label: str, numerics: NumericSettings) -> Optional[float]:
    """Ratio for a period without demand: 0, None to skip, or an error."""
    policy = numerics.zero_demand
    if policy == "zero":
        return 0.0
    if policy == "skip":
        logger.info(f"{label}: no demand, skipped")
        return None
    raise ParameterDomainError(f"{label}: no demand to staff for (zero_demand = {policy})")


def _ratio_for_rate(rate: float, scenario: Scenario, label: str, numerics: NumericSettings) -> Optional[float]:
    if rate == 0:
        return _zero_demand_ratio(label, numerics)
    try:
        return _solve(rate, scenario, scenario.criterion, numerics)
    except StaffingError as e:
        logger.error(f"{label} failed: {e.message}")
        raise e.add_context(label)


def _staff_columns(ratio: float, n_list: Sequence[int]) -> Dict[str, int]:
    return {f"staff_n{n}": (0 if ratio == 0 else staff_count(ratio, n)) for n in n_list}


def fleet_growth_curve(
    scenario: Scenario,
    fleet_sizes: Optional[Sequence[int]] = None,
    n_list: Optional[Sequence[int]] = None,
    numerics: Optional[NumericSettings] = None,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """
    Staffing against fleet size.

    Columns: fleet_size, lambda_per_hour, c, staff_n<k> per batch index and
    one_to_one (one operator per vehicle).
    """
    numerics = resolve_numerics(numerics)
    sizes = tuple(fleet_sizes if fleet_sizes is not None else (scenario.fleet_sizes or ()))
    n_list = tuple(n_list if n_list is not None else scenario.n_list)
    if not sizes:
        raise ParameterDomainError(f"Scenario '{scenario.name}' has no fleet sizes")

    def point(size: int) -> Optional[Dict[str, object]]:
        rate = scenario.fleet_arrival_rate(size)
        ratio = _ratio_for_rate(rate, scenario, f"fleet size {size}", numerics)
        if ratio is None:
            return None
        return {"fleet_size": size, "lambda_per_hour": rate, "c": ratio, **_staff_columns(ratio, n_list), "one_to_one": size}

    records = [r for r in WorkerPool.map_ordered(point, sizes, numerics, workers) if r is not None]
    return pd.DataFrame.from_records(records)


def hourly_profile(
    scenario: Scenario,
    numerics: Optional[NumericSettings] = None,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """
    Independent static solves for each hour of the day.

    Columns: hour, miles, lambda_per_hour, c, utilization, staff_n<k>.
    """
    numerics = resolve_numerics(numerics)
    rates = scenario.hourly_rates()
    n_list = tuple(scenario.n_list)

    def hour(index: int) -> Optional[Dict[str, object]]:
        rate = rates[index]
        ratio = _ratio_for_rate(rate, scenario, f"hour {index}", numerics)
        if ratio is None:
            return None
        util = rate * scenario.mark.mean / (ratio * scenario.service_rate) if ratio > 0 else 0.0
        return {
            "hour": index,
            "miles": scenario.hourly_miles[index],
            "lambda_per_hour": rate,
            "c": ratio,
            "utilization": util,
            **_staff_columns(ratio, n_list),
        }

    records = [r for r in WorkerPool.map_ordered(hour, range(len(rates)), numerics, workers) if r is not None]
    return pd.DataFrame.from_records(records)


STORAGE_COUNTERPART = {
    Discipline.DELAY_FCFS: StorageVariant.THRESHOLD,
    Discipline.PARTIAL_BLOCKING: StorageVariant.FINITE,
    Discipline.INFINITE: StorageVariant.SHOT_NOISE,
}


def _closed_form_cdf(arrival_rate: float, service_rate: float, mark: MarkDistribution, c: float, variant: StorageVariant):
    if not isinstance(mark, ExponentialMark):
        return None
    if variant == StorageVariant.SHOT_NOISE:
        return lambda x: np.array([gamma_stationary_cdf(arrival_rate, service_rate, mark.rate, v) for v in np.atleast_1d(x)])
    if variant == StorageVariant.FINITE:
        return lambda x: blocking_closed_form_cdf(arrival_rate, service_rate, mark.rate, x, c)
    return None


def convergence_study(
    arrival_rate: float,
    service_rate: float,
    c: float,
    batch: str = "geo:1",
    n_list: Sequence[int] = (10, 50, 500),
    horizon: float = 10.0,
    reps: int = 10_000,
    seed: int = 0,
    discipline: Discipline = Discipline.DELAY_FCFS,
    numerics: Optional[NumericSettings] = None,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """
    KS distance between the scaled queue at time t and its storage limit.

    The limit (threshold, finite or shot-noise storage with the limiting mark)
    is simulated once; the queue is simulated for each n with ceil(cn)
    servers. For exponential marks the distance to the stationary closed
    form is reported too where one exists.

    Columns: n, servers, ks_distance, queue_mean, storage_mean, ks_to_closed_form.
    """
    numerics = resolve_numerics(numerics)
    discipline = Discipline(discipline)
    variant = STORAGE_COUNTERPART[discipline]
    service = ExponentialService(service_rate)
    arrivals = PoissonArrivals(arrival_rate)
    mark = parse_batch(batch, max(n_list)).to_mark()

    storage = simulate_storage(
        StorageSpec(arrivals, mark, service, variant, threshold=None if variant == StorageVariant.SHOT_NOISE else c),
        horizon,
        reps,
        seed,
        numerics=numerics,
        workers=workers,
    )
    closed_form = _closed_form_cdf(arrival_rate, service_rate, mark, c, variant)

    records = []
    for n in n_list:
        spec = QueueSpec(
            arrivals,
            parse_batch(batch, n),
            service,
            servers=None if discipline == Discipline.INFINITE else staff_count(c, n),
            discipline=discipline,
        )
        queue = simulate_queue(spec, horizon, reps, seed + int(n), numerics=numerics, workers=workers)
        scaled = queue.scaled_terminal
        records.append(
            {
                "n": int(n),
                "servers": spec.servers,
                "ks_distance": ks_distance(scaled, storage.terminal),
                "queue_mean": float(np.mean(scaled)),
                "storage_mean": storage.mean,
                "ks_to_closed_form": ks_distance_to_cdf(scaled, closed_form) if closed_form else math.nan,
            }
        )
        logger.info(f"n={n}: KS distance {records[-1]['ks_distance']:.4f}")
    return pd.DataFrame.from_records(records)

"""Scenario inputs: real-world mileage data mapped to queue parameters."""

import logging
import math
import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..config_manager import ConfigDocument, ConfigSection
from ..errors import ConfigError, ParameterDomainError
from ..marks import DeterministicMark, ExponentialService, MarkDistribution, ServiceDistribution, parse_batch
from ..simkit import DependenceMode, Discipline, PoissonArrivals, QueueSpec, StorageSpec, StorageVariant
from ..stationary import Criterion

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
METRO_FILE = DATA_DIR / "metro_miles.csv"
HOURLY_FILE = DATA_DIR / "nyc_taxi_hourly_synthetic.csv"

WAYMO_MILES_PER_DISENGAGEMENT = 11154.3
CRUISE_MILES_PER_DISENGAGEMENT = 5204.9
PEAK_HOUR_FRACTION = 0.061
MILES_PER_TAXI_PER_YEAR = 70_000.0
PM_SHIFT_FRACTION = 0.63
PM_SHIFT_HOURS = 12.0
TABLE_DAYS_PER_YEAR = 360
HOURS_PER_DAY = 24


def arrival_rate_from_miles(miles_in_period: float, miles_per_disengagement: float) -> float:
    """Disengagements per period: miles driven in the period over miles per disengagement."""
    for name, value in (("Miles in period", miles_in_period), ("Miles per disengagement", miles_per_disengagement)):
        if not value > 0:
            raise ParameterDomainError(f"{name} must be positive, got {value}")
    return float(miles_in_period) / float(miles_per_disengagement)


class MilesMode(str, Enum):
    """How a scenario states its demand."""

    ANNUAL = "annual"
    HOURLY = "hourly"
    FLEET = "fleet"
    RATE = "rate"


@dataclass(frozen=True)
class Scenario:
    """
    One staffing question in real-world units.

    Exactly one demand input is set: annual miles with a peak-hour share,
    24 hourly mileages, a fleet-size sweep, or a direct arrival rate.
    """

    name: str
    label: str
    mark: MarkDistribution = DeterministicMark(1.0)
    epsilon: float = 0.001
    criterion: Criterion = Criterion.P0
    mean_service_minutes: float = 1.0
    miles_per_disengagement: float = WAYMO_MILES_PER_DISENGAGEMENT
    annual_miles_millions: Optional[float] = None
    days_per_year: int = TABLE_DAYS_PER_YEAR
    peak_hour_fraction: float = PEAK_HOUR_FRACTION
    hourly_miles: Optional[Tuple[float, ...]] = None
    fleet_sizes: Optional[Tuple[int, ...]] = None
    miles_per_vehicle_per_year: float = MILES_PER_TAXI_PER_YEAR
    shift_fraction: float = PM_SHIFT_FRACTION
    shift_hours: float = PM_SHIFT_HOURS
    lambda_per_hour: Optional[float] = None
    n_list: Tuple[int, ...] = ()
    vehicles_millions: Optional[float] = None

    def __post_init__(self):
        active = [
            mode
            for mode, value in (
                (MilesMode.ANNUAL, self.annual_miles_millions),
                (MilesMode.HOURLY, self.hourly_miles),
                (MilesMode.FLEET, self.fleet_sizes),
                (MilesMode.RATE, self.lambda_per_hour),
            )
            if value is not None
        ]
        if len(active) != 1:
            raise ConfigError(
                f"Scenario '{self.name}' needs exactly one demand input, got {[m.value for m in active] or 'none'}"
            )
        for name in (
            "epsilon",
            "mean_service_minutes",
            "miles_per_disengagement",
            "peak_hour_fraction",
            "miles_per_vehicle_per_year",
            "shift_fraction",
            "shift_hours",
        ):
            if not getattr(self, name) > 0:
                raise ParameterDomainError(f"Scenario '{self.name}': {name} must be positive")
        if not 0 < self.epsilon < 1:
            raise ParameterDomainError(f"Scenario '{self.name}': epsilon must lie in (0, 1)")
        if self.days_per_year not in (360, 365):
            raise ParameterDomainError(f"Scenario '{self.name}': days_per_year must be 360 or 365")
        if self.hourly_miles is not None:
            if len(self.hourly_miles) != HOURS_PER_DAY or any(m < 0 for m in self.hourly_miles):
                raise ParameterDomainError(f"Scenario '{self.name}' needs 24 nonnegative hourly mileages")
        if self.fleet_sizes is not None and any(f < 0 for f in self.fleet_sizes):
            raise ParameterDomainError(f"Scenario '{self.name}': fleet sizes must be nonnegative")

    @property
    def mode(self) -> MilesMode:
        if self.annual_miles_millions is not None:
            return MilesMode.ANNUAL
        if self.hourly_miles is not None:
            return MilesMode.HOURLY
        if self.fleet_sizes is not None:
            return MilesMode.FLEET
        return MilesMode.RATE

    @property
    def service_rate(self) -> float:
        """mu per hour."""
        return 60.0 / self.mean_service_minutes

    def peak_hour_miles(self, days_per_year: Optional[int] = None) -> float:
        days = days_per_year or self.days_per_year
        return self.annual_miles_millions * 1e6 / days * self.peak_hour_fraction

    def arrival_rate(self, days_per_year: Optional[int] = None) -> float:
        """Disengagements per hour for annual or direct-rate scenarios."""
        if self.mode == MilesMode.RATE:
            return float(self.lambda_per_hour)
        if self.mode != MilesMode.ANNUAL:
            raise ConfigError(f"Scenario '{self.name}' has no single arrival rate ({self.mode.value} demand)")
        return arrival_rate_from_miles(self.peak_hour_miles(days_per_year), self.miles_per_disengagement)

    def fleet_arrival_rate(self, fleet_size: int) -> float:
        """Disengagements per shift hour for a fleet of the given size (0 for an empty fleet)."""
        if fleet_size == 0:
            return 0.0
        daily = fleet_size * self.miles_per_vehicle_per_year / 365.0
        return arrival_rate_from_miles(daily * self.shift_fraction / self.shift_hours, self.miles_per_disengagement)

    def hourly_rates(self) -> List[float]:
        """Disengagements in each hour of the day (0 for hours without miles)."""
        if self.hourly_miles is None:
            raise ConfigError(f"Scenario '{self.name}' has no hourly mileage")
        return [arrival_rate_from_miles(m, self.miles_per_disengagement) if m > 0 else 0.0 for m in self.hourly_miles]


@dataclass(frozen=True)
class SystemInputs:
    """Direct model parameters from a [system] section."""

    arrival_rate: float
    service_rate: float
    mark: MarkDistribution
    epsilon: float = 0.001
    criterion: Criterion = Criterion.P0
    c: Optional[float] = None
    c_list: Tuple[float, ...] = ()
    service: Optional[ServiceDistribution] = None
    n_list: Tuple[int, ...] = ()
    label: str = "system"

    @property
    def thresholds(self) -> Tuple[float, ...]:
        if self.c_list:
            return self.c_list
        return (self.c,) if self.c is not None else ()


def _require(section: ConfigSection, key: str):
    value = section.get(key)
    if value is None:
        raise ConfigError(f"Missing required key in [{section.header}]", line=section.line, key=key)
    return value


def system_from_config(document: ConfigDocument) -> SystemInputs:
    """Build SystemInputs from the [system] section."""
    section = document.section("system")
    if section is None:
        raise ConfigError("Config has no [system] section")
    if section.has("mu_per_hour"):
        service_rate = section.get("mu_per_hour")
    elif section.has("mean_service_minutes"):
        service_rate = 60.0 / section.get("mean_service_minutes")
    else:
        raise ConfigError("Missing required key in [system]", line=section.line, key="mu_per_hour")
    return SystemInputs(
        arrival_rate=_require(section, "lambda_per_hour"),
        service_rate=service_rate,
        mark=_require(section, "mark"),
        epsilon=section.get("epsilon", 0.001),
        criterion=Criterion(section.get("criterion", "p0")),
        c=section.get("c"),
        c_list=section.get("c_list", ()),
        service=section.get("service"),
        n_list=section.get("n_list", ()),
        label=section.get("label", "system"),
    )


def _resolve_data_path(value: str, document: ConfigDocument) -> Path:
    if value == "bundled":
        return METRO_FILE
    path = Path(value)
    if not path.is_absolute() and document.source not in ("<text>", ""):
        path = Path(document.source).parent / path
    return path


def load_metro_table(path: Optional[Path] = None) -> pd.DataFrame:
    """Metro annual-miles table: metro, annual_miles_millions, vehicles_millions."""
    path = Path(path) if path else METRO_FILE
    try:
        frame = pd.read_csv(path, comment="#")
    except (OSError, pd.errors.ParserError) as e:
        raise ConfigError(f"Could not read metro table {path}: {e}") from e
    missing = {"metro", "annual_miles_millions"} - set(frame.columns)
    if missing:
        raise ConfigError(f"Metro table {path} lacks columns {sorted(missing)}")
    return frame


def load_hourly_miles(path: Optional[Path] = None) -> Tuple[float, ...]:
    """24 hourly mileages from a file with hour and miles columns."""
    path = Path(path) if path else HOURLY_FILE
    try:
        frame = pd.read_csv(path, comment="#")
    except (OSError, pd.errors.ParserError) as e:
        raise ConfigError(f"Could not read hourly miles {path}: {e}") from e
    if "miles" not in frame.columns or len(frame) != HOURS_PER_DAY:
        raise ConfigError(f"Hourly file {path} needs a 'miles' column with 24 rows")
    return tuple(float(v) for v in frame.sort_values("hour")["miles"])


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")


def scenarios_from_config(document: ConfigDocument) -> List[Scenario]:
    """
    One Scenario per [scenario.<name>] section, in file order.

    Missing mark, epsilon, criterion, service and n_list values fall back to
    the [system] section. A metro_file key expands the section into one
    scenario per metro row.
    """
    system = document.section("system")
    inherited: Dict[str, object] = {}
    if system is not None:
        for key in ("mark", "epsilon", "criterion", "n_list", "mean_service_minutes"):
            if system.has(key):
                inherited[key] = system.get(key)
        if system.has("mu_per_hour") and not system.has("mean_service_minutes"):
            inherited["mean_service_minutes"] = 60.0 / system.get("mu_per_hour")

    scenarios: List[Scenario] = []
    for section in document.of_kind("scenario"):
        values = {**inherited, **section.values()}
        if "mu_per_hour" in values:
            values["mean_service_minutes"] = 60.0 / values.pop("mu_per_hour")
        metro_file = values.pop("metro_file", None)
        hourly_file = values.pop("hourly_miles_file", None)
        if hourly_file is not None:
            values["hourly_miles"] = load_hourly_miles(
                HOURLY_FILE if hourly_file == "bundled" else _resolve_data_path(hourly_file, document)
            )
        if "criterion" in values:
            values["criterion"] = Criterion(values["criterion"])
        values.setdefault("label", section.name)

        try:
            if metro_file is None:
                scenarios.append(Scenario(name=section.name, **values))
                continue
            template = Scenario(name=section.name, **{**values, "annual_miles_millions": 1.0})
            for _, row in load_metro_table(_resolve_data_path(metro_file, document)).iterrows():
                vehicles = row.get("vehicles_millions")
                scenarios.append(
                    replace(
                        template,
                        name=f"{section.name}.{_slug(row['metro'])}",
                        label=str(row["metro"]),
                        annual_miles_millions=float(row["annual_miles_millions"]),
                        vehicles_millions=None if pd.isna(vehicles) else float(vehicles),
                    )
                )
        except TypeError as e:
            raise ConfigError(f"Invalid keys for [{section.header}]: {e}", line=section.line) from e

    logger.info(f"Loaded {len(scenarios)} scenario(s) from {document.source}")
    return scenarios


@dataclass(frozen=True)
class SimulationInputs:
    """Options of a [simulation] section."""

    model: str = "queue"
    discipline: str = "delay"
    variant: str = "threshold"
    batch: str = "geo:1"
    n: int = 100
    n_list: Tuple[int, ...] = (10, 50, 500)
    service: Optional[ServiceDistribution] = None
    horizon_hours: float = 10.0
    reps: int = 10_000
    seed: Optional[int] = None
    grid_points: int = 0
    record_paths: int = 0
    initial_jobs: int = 0
    initial_level: float = 0.0
    dependence: str = "independent"
    dependence_rho: float = 0.0
    rho_list: Tuple[float, ...] = (0.0, 0.1, 0.5, 0.9, 1.0)
    track_busy: bool = False

    def grid(self) -> Optional[np.ndarray]:
        if self.grid_points < 2:
            return None
        return np.linspace(0.0, self.horizon_hours, self.grid_points)

    def service_for(self, system: SystemInputs) -> ServiceDistribution:
        return self.service or system.service or ExponentialService(system.service_rate)

    def queue_spec(self, system: SystemInputs) -> QueueSpec:
        """Batch queue at index n with ceil(cn) servers (none for the infinite discipline)."""
        discipline = Discipline(self.discipline)
        servers = None
        if discipline != Discipline.INFINITE:
            if system.c is None:
                raise ConfigError("Finite server pools need system.c", key="c")
            servers = int(math.ceil(round(system.c * self.n, 9)))
        return QueueSpec(
            arrivals=PoissonArrivals(system.arrival_rate),
            batch=parse_batch(self.batch, self.n),
            service=self.service_for(system),
            servers=servers,
            discipline=discipline,
            initial_jobs=self.initial_jobs,
            dependence=DependenceMode(self.dependence),
            dependence_rho=self.dependence_rho,
        )

    def storage_spec(self, system: SystemInputs) -> StorageSpec:
        """Storage process driven by the system's mark law."""
        variant = StorageVariant(self.variant)
        return StorageSpec(
            arrivals=PoissonArrivals(system.arrival_rate),
            mark=system.mark,
            service=self.service_for(system),
            variant=variant,
            threshold=None if variant == StorageVariant.SHOT_NOISE else system.c,
            initial_level=self.initial_level,
        )


def simulation_from_config(document: ConfigDocument) -> SimulationInputs:
    """SimulationInputs from the [simulation] section (defaults when absent)."""
    section = document.section("simulation")
    if section is None:
        return SimulationInputs()
    return SimulationInputs(**section.values())

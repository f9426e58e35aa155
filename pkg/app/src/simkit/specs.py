"""Specifications and results for the batch-queue and storage simulators."""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ParameterDomainError
from ..marks import (
    BatchDistribution,
    ExponentialService,
    MarkDistribution,
    ServiceDistribution,
)

logger = logging.getLogger(__name__)


class Discipline(str, Enum):
    """Queue discipline for finite server pools."""

    DELAY_FCFS = "delay"
    PARTIAL_BLOCKING = "blocking"
    INFINITE = "infinite"


class DependenceMode(str, Enum):
    """How service durations within one batch depend on each other."""

    INDEPENDENT = "independent"
    COPY_FIRST = "copy_first"
    COPY_PREVIOUS = "copy_previous"
    AVERAGE_PREVIOUS = "average_previous"


class StorageVariant(str, Enum):
    SHOT_NOISE = "shot_noise"
    THRESHOLD = "threshold"
    FINITE = "finite"


# ---------------------------------------------------------------------------
# Arrival epochs
# ---------------------------------------------------------------------------


class ArrivalProcess:
    """Generates sorted batch-arrival epochs on [0, horizon]."""

    def epochs(self, rng: np.random.Generator, horizon: float) -> np.ndarray:
        raise NotImplementedError

    def mean_rate(self) -> float:
        """Long-run epoch rate used for the stability flag."""
        raise NotImplementedError

    def to_text(self) -> str:
        raise NotImplementedError

    def epoch_matrix(self, rng: np.random.Generator, horizon: float, reps: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Epochs of `reps` independent replications as a padded matrix.

        Returns:
            (times, counts): row r holds counts[r] sorted epochs followed by
            padding equal to horizon
        """
        rows = [self.epochs(rng, horizon) for _ in range(reps)]
        counts = np.array([len(row) for row in rows], dtype=np.int64)
        times = np.full((reps, int(counts.max(initial=0))), float(horizon))
        for r, row in enumerate(rows):
            times[r, : len(row)] = row
        return times, counts


@dataclass(frozen=True)
class PoissonArrivals(ArrivalProcess):
    rate: float

    def __post_init__(self):
        if not math.isfinite(self.rate) or self.rate < 0:
            raise ParameterDomainError(f"Arrival rate must be >= 0, got {self.rate}")

    def epochs(self, rng, horizon):
        count = rng.poisson(self.rate * horizon) if self.rate > 0 else 0
        return np.sort(rng.uniform(0.0, horizon, count))

    def epoch_matrix(self, rng, horizon, reps):
        counts = rng.poisson(self.rate * horizon, reps).astype(np.int64) if self.rate > 0 else np.zeros(reps, np.int64)
        width = int(counts.max(initial=0))
        filled = np.arange(width)[None, :] < counts[:, None]
        times = np.full((reps, width), float(horizon))
        times[filled] = rng.uniform(0.0, horizon, int(counts.sum()))
        # padding equals horizon, so it stays behind every real epoch
        times.sort(axis=1)
        return times, counts

    def mean_rate(self):
        return float(self.rate)

    def to_text(self):
        return f"poisson:{self.rate:g}"


@dataclass(frozen=True)
class NonhomogeneousArrivals(ArrivalProcess):
    """Poisson epochs with intensity rate_fn(t), generated by thinning against rate_bound."""

    rate_fn: Callable[[float], float]
    rate_bound: float

    def __post_init__(self):
        if not math.isfinite(self.rate_bound) or self.rate_bound <= 0:
            raise ParameterDomainError(f"Thinning bound must be positive, got {self.rate_bound}")

    def epochs(self, rng, horizon):
        count = rng.poisson(self.rate_bound * horizon)
        candidates = np.sort(rng.uniform(0.0, horizon, count))
        accept = rng.uniform(0.0, 1.0, count)
        rates = np.array([self.rate_fn(t) for t in candidates], dtype=float)
        if np.any(rates > self.rate_bound * (1 + 1e-12)):
            raise ParameterDomainError("Rate function exceeds its declared thinning bound")
        return candidates[accept * self.rate_bound < rates]

    def mean_rate(self):
        return float(self.rate_bound)

    def to_text(self):
        return f"nhpp:bound={self.rate_bound:g}"


@dataclass(frozen=True)
class RenewalArrivals(ArrivalProcess):
    """Renewal epochs whose inter-arrival times follow a positive law."""

    interarrival: ServiceDistribution

    def epochs(self, rng, horizon):
        times: List[float] = []
        t = 0.0
        chunk = max(16, int(2 * horizon / self.interarrival.mean) + 1)
        while True:
            gaps = self.interarrival.sample(rng, chunk)
            stamps = t + np.cumsum(gaps)
            inside = stamps[stamps <= horizon]
            times.extend(inside.tolist())
            if len(inside) < chunk:
                break
            t = float(stamps[-1])
        return np.asarray(times, dtype=float)

    def mean_rate(self):
        return 1.0 / self.interarrival.mean

    def to_text(self):
        return f"renewal:{self.interarrival.to_text()}"


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QueueSpec:
    """
    Full parameterisation of a batch-arrival queue at scale index n.

    servers is the integer pool size cn, or None for infinitely many servers.
    """

    arrivals: ArrivalProcess
    batch: BatchDistribution
    service: ServiceDistribution
    servers: Optional[int] = None
    discipline: Discipline = Discipline.DELAY_FCFS
    initial_jobs: int = 0
    initial_service: Optional[ServiceDistribution] = None
    dependence: DependenceMode = DependenceMode.INDEPENDENT
    dependence_rho: float = 0.0

    def __post_init__(self):
        if self.servers is None:
            object.__setattr__(self, "discipline", Discipline.INFINITE)
        elif int(self.servers) < 1:
            raise ParameterDomainError(f"Finite server pool must have cn >= 1, got {self.servers}")
        elif self.discipline == Discipline.INFINITE:
            raise ParameterDomainError("Infinite discipline requires servers=None")
        if not 0.0 <= self.dependence_rho <= 1.0:
            raise ParameterDomainError(f"Dependence parameter rho must lie in [0, 1], got {self.dependence_rho}")
        if self.initial_jobs < 0:
            raise ParameterDomainError(f"Initial jobs must be >= 0, got {self.initial_jobs}")
        if self.discipline == Discipline.PARTIAL_BLOCKING and self.initial_jobs > self.servers:
            raise ParameterDomainError("Blocking queue cannot start above its capacity")
        if not self.stable:
            logger.warning(
                f"Queue spec is not stable (offered load {self.offered_load:g} >= "
                f"{self.servers} servers); simulating anyway"
            )

    @property
    def residual_service(self) -> ServiceDistribution:
        return self.initial_service or self.service

    @property
    def offered_load(self) -> float:
        return self.arrivals.mean_rate() * self.batch.mean * self.service.mean

    @property
    def stable(self) -> bool:
        """lambda E[B] < cn mu; always True for infinite servers."""
        if self.servers is None or self.discipline == Discipline.PARTIAL_BLOCKING:
            return True
        return self.offered_load < self.servers

    @property
    def uses_exact_engine(self) -> bool:
        """Exponential, independent service admits the arrival-to-arrival exact sampler."""
        return (
            self.service.is_exponential
            and self.residual_service.is_exponential
            and getattr(self.residual_service, "rate", None) == getattr(self.service, "rate", None)
            and (self.dependence == DependenceMode.INDEPENDENT or self.dependence_rho == 0.0)
        )

    def describe(self) -> Dict[str, object]:
        return {
            "arrivals": self.arrivals.to_text(),
            "batch": self.batch.to_text(),
            "n": self.batch.n,
            "service": self.service.to_text(),
            "servers": self.servers,
            "discipline": self.discipline.value,
            "initial_jobs": self.initial_jobs,
            "dependence": self.dependence.value,
            "dependence_rho": self.dependence_rho,
            "stable": self.stable,
        }


@dataclass(frozen=True)
class StorageSpec:
    """Parameterisation of a shot-noise, threshold or finite storage process."""

    arrivals: ArrivalProcess
    mark: MarkDistribution
    service: ServiceDistribution
    variant: StorageVariant = StorageVariant.SHOT_NOISE
    threshold: Optional[float] = None
    initial_level: float = 0.0
    initial_service: Optional[ServiceDistribution] = None

    def __post_init__(self):
        if self.variant != StorageVariant.SHOT_NOISE:
            if self.threshold is None or not self.threshold > 0:
                raise ParameterDomainError(f"{self.variant.value} storage needs a threshold c > 0")
        if self.initial_level < 0:
            raise ParameterDomainError(f"Initial level must be >= 0, got {self.initial_level}")
        if self.variant == StorageVariant.FINITE and self.initial_level > self.threshold:
            raise ParameterDomainError("Finite storage cannot start above its capacity c")

    @property
    def residual_service(self) -> ServiceDistribution:
        return self.initial_service or self.service

    @property
    def service_rate(self) -> Optional[float]:
        return self.service.rate if isinstance(self.service, ExponentialService) else None

    def describe(self) -> Dict[str, object]:
        return {
            "arrivals": self.arrivals.to_text(),
            "mark": self.mark.to_text(),
            "service": self.service.to_text(),
            "variant": self.variant.value,
            "threshold": self.threshold,
            "initial_level": self.initial_level,
        }


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass
class PathRecord:
    replication: int
    time: float
    value: float
    event: str


@dataclass
class SimResult:
    """Terminal values, optional paths and summary statistics of a simulation run."""

    terminal: np.ndarray
    seed: int
    reps: int
    horizon: float
    scale: float = 1.0
    busy_fraction: Optional[float] = None
    grid: Optional[np.ndarray] = None
    paths: Optional[np.ndarray] = None
    path_records: List[PathRecord] = field(default_factory=list)
    spec: Dict[str, object] = field(default_factory=dict)

    @property
    def scaled_terminal(self) -> np.ndarray:
        return self.terminal / self.scale

    @property
    def mean(self) -> float:
        return float(np.sum(self.scaled_terminal) / self.reps)

    @property
    def variance(self) -> float:
        if self.reps < 2:
            return 0.0
        centred = self.scaled_terminal - self.mean
        return float(np.sum(centred * centred) / (self.reps - 1))

    def ecdf(self, points: Sequence[float]) -> np.ndarray:
        from .statistics import empirical_cdf

        return empirical_cdf(self.scaled_terminal, points)

    def summary(self, points: Optional[Sequence[float]] = None) -> Dict[str, object]:
        """Plain summary, stable under reruns with the same seed."""
        out: Dict[str, object] = {
            "seed": self.seed,
            "reps": self.reps,
            "horizon": self.horizon,
            "scale": self.scale,
            "mean": self.mean,
            "variance": self.variance,
        }
        if self.busy_fraction is not None:
            out["busy_fraction"] = self.busy_fraction
        if points is not None:
            out["ecdf"] = [float(v) for v in self.ecdf(points)]
        return out

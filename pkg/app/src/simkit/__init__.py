"""Seeded simulation of batch-arrival queues and their limiting storage processes."""

from .dependence import sample_dependent_services
from .queues import busy_fraction, dependence_study, simulate_queue
from .specs import (
    ArrivalProcess,
    DependenceMode,
    Discipline,
    NonhomogeneousArrivals,
    PathRecord,
    PoissonArrivals,
    QueueSpec,
    RenewalArrivals,
    SimResult,
    StorageSpec,
    StorageVariant,
)
from .statistics import (
    empirical_cdf,
    grid_paths_frame,
    ks_distance,
    ks_distance_to_cdf,
    paths_frame,
    summary_frame,
)
from .storage import finite_jump, simulate_storage, threshold_drain, threshold_hitting_time

__all__ = [
    "ArrivalProcess",
    "DependenceMode",
    "Discipline",
    "NonhomogeneousArrivals",
    "PathRecord",
    "PoissonArrivals",
    "QueueSpec",
    "RenewalArrivals",
    "SimResult",
    "StorageSpec",
    "StorageVariant",
    "busy_fraction",
    "dependence_study",
    "empirical_cdf",
    "finite_jump",
    "grid_paths_frame",
    "ks_distance",
    "ks_distance_to_cdf",
    "paths_frame",
    "sample_dependent_services",
    "simulate_queue",
    "simulate_storage",
    "summary_frame",
    "threshold_drain",
    "threshold_hitting_time",
]

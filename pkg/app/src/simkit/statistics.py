"""Empirical distribution utilities and tabular export of simulation output."""

import logging
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from ..errors import ParameterDomainError
from .specs import PathRecord, SimResult

logger = logging.getLogger(__name__)

PATH_COLUMNS = ["replication", "time", "value", "event"]


def _nonempty(samples: Iterable[float], name: str = "samples") -> np.ndarray:
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size == 0:
        raise ParameterDomainError(f"Empirical statistics need a non-empty sample set ({name})")
    return arr


def empirical_cdf(samples: Iterable[float], grid: Sequence[float]) -> np.ndarray:
    """Fraction of samples <= each grid point."""
    ordered = np.sort(_nonempty(samples))
    return np.searchsorted(ordered, np.asarray(grid, dtype=float), side="right") / ordered.size


def ks_distance(samples_a: Iterable[float], samples_b: Iterable[float]) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    a = _nonempty(samples_a, "first sample")
    b = _nonempty(samples_b, "second sample")
    return float(stats.ks_2samp(a, b, method="asymp").statistic)


def ks_distance_to_cdf(samples: Iterable[float], cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """One-sample Kolmogorov-Smirnov statistic against an analytic CDF."""
    return float(stats.kstest(_nonempty(samples), cdf).statistic)


def summary_frame(result: SimResult, points: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """
    One-row-per-statistic table of a simulation result.

    Columns are `statistic` and `value`; ECDF rows are named `ecdf@<x>`.
    """
    rows = [(key, value) for key, value in result.summary().items()]
    if points is not None:
        for x, value in zip(points, result.ecdf(points)):
            rows.append((f"ecdf@{float(x):g}", float(value)))
    return pd.DataFrame(rows, columns=["statistic", "value"])


def paths_frame(records: Sequence[PathRecord]) -> pd.DataFrame:
    """Event-level path dump as a table with replication, time, value and event."""
    if not records:
        return pd.DataFrame(columns=PATH_COLUMNS)
    return pd.DataFrame(
        {
            "replication": [r.replication for r in records],
            "time": [r.time for r in records],
            "value": [r.value for r in records],
            "event": [r.event for r in records],
        },
        columns=PATH_COLUMNS,
    )


def grid_paths_frame(result: SimResult) -> pd.DataFrame:
    """Sampled paths on the result's time grid, one column per replication."""
    if result.grid is None or result.paths is None:
        return pd.DataFrame()
    frame = pd.DataFrame(result.paths.T / result.scale, columns=[f"rep{i}" for i in range(result.paths.shape[0])])
    frame.insert(0, "time", result.grid)
    return frame

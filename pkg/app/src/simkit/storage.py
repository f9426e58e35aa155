"""Exact path simulation of the shot-noise, threshold and finite storage processes."""

import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..app_settings import NumericSettings, resolve_numerics
from ..errors import ParameterDomainError, UnsupportedConfigurationError
from ..marks import ExponentialService
from ..workers import WorkerPool
from .events import ARRIVAL, SAMPLE, build_event_table, record_column
from .queues import _check_run
from .seeding import block_bounds, replication_rng
from .specs import PathRecord, SimResult, StorageSpec, StorageVariant

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def threshold_hitting_time(level: ArrayLike, c: float, rate: float) -> ArrayLike:
    """Time for a threshold process above c to drain down to c (zero at or below c)."""
    return np.maximum(np.asarray(level, dtype=float) - c, 0.0) / (c * rate)


def threshold_drain(level: ArrayLike, elapsed: ArrayLike, c: float, rate: float) -> ArrayLike:
    """
    Level of the threshold process after `elapsed` time units without jumps.

    Above c the level falls linearly at rate c*mu; from min(level, c) it
    decays as exp(-mu * remaining time).
    """
    level = np.asarray(level, dtype=float)
    elapsed = np.asarray(elapsed, dtype=float)
    hit = threshold_hitting_time(level, c, rate)
    linear = level - c * rate * elapsed
    decayed = np.minimum(level, c) * np.exp(-rate * np.maximum(elapsed - hit, 0.0))
    return np.where(elapsed <= hit, linear, decayed)


def finite_jump(level: ArrayLike, mark: ArrayLike, c: float) -> ArrayLike:
    """Post-jump level of the finite storage process: admits min(mark, c - level)."""
    level = np.asarray(level, dtype=float)
    return level + np.minimum(np.asarray(mark, dtype=float), c - level)


def _check_exponential(spec: StorageSpec) -> float:
    if not isinstance(spec.service, ExponentialService):
        raise UnsupportedConfigurationError(
            f"{spec.variant.value} storage is only simulated with exponential service, got {spec.service.to_text()}"
        )
    residual = spec.residual_service
    if not isinstance(residual, ExponentialService) or residual.rate != spec.service.rate:
        raise UnsupportedConfigurationError(
            f"{spec.variant.value} storage needs the initial content to drain like fresh content"
        )
    return spec.service.rate


def _shot_noise_level(
    spec: StorageSpec, t: np.ndarray, times: np.ndarray, filled: np.ndarray, marks: np.ndarray
) -> np.ndarray:
    """Levels at times t (shape (rows, k)) for the epochs and marks of the same rows."""
    level = spec.initial_level * np.asarray(spec.residual_service.sf(t), dtype=float)
    # one epoch column at a time keeps memory at rows x k
    for j in range(times.shape[1]):
        age = t - times[:, j : j + 1]
        alive = (age >= 0) & filled[:, j : j + 1]
        level = level + np.where(alive, spec.service.sf(np.maximum(age, 0.0)), 0.0) * marks[:, j : j + 1]
    return level


def _shot_noise_block(
    spec: StorageSpec,
    horizon: float,
    reps: range,
    seed: int,
    block_index: int,
    grid: Optional[np.ndarray],
    record_paths: int,
) -> Tuple[np.ndarray, Optional[np.ndarray], List[PathRecord]]:
    """psi_t = psi_0 G0-bar(t) + sum of M_i G-bar(t - A_i) over epochs A_i <= t."""
    rng = replication_rng(seed, block_index)
    count = len(reps)
    times, counts = spec.arrivals.epoch_matrix(rng, horizon, count)
    filled = np.arange(times.shape[1])[None, :] < counts[:, None]
    marks = np.zeros(times.shape)
    marks[filled] = spec.mark.sample(rng, int(counts.sum()))

    terminal = _shot_noise_level(spec, np.full((count, 1), float(horizon)), times, filled, marks)[:, 0]
    paths = None
    if grid is not None:
        paths = _shot_noise_level(spec, np.tile(np.asarray(grid, dtype=float), (count, 1)), times, filled, marks)

    records: List[PathRecord] = []
    for r in range(min(count, max(0, record_paths - reps.start))):
        records.append(PathRecord(reps.start + r, 0.0, float(spec.initial_level), "initial"))
        epochs = times[r, : counts[r]]
        if len(epochs):
            row = slice(r, r + 1)
            after = _shot_noise_level(spec, epochs[None, :], times[row], filled[row], marks[row])[0]
            records.extend(PathRecord(reps.start + r, float(t), float(v), "arrival") for t, v in zip(epochs, after))
    return terminal, paths, records


def _bounded_block(
    spec: StorageSpec,
    horizon: float,
    reps: range,
    seed: int,
    block_index: int,
    grid: Optional[np.ndarray],
    record_paths: int,
) -> Tuple[np.ndarray, Optional[np.ndarray], List[PathRecord]]:
    """Event-to-event evolution of the threshold or finite process."""
    rate = spec.service.rate
    c = float(spec.threshold)
    rng = replication_rng(seed, block_index)
    count = len(reps)
    times, counts = spec.arrivals.epoch_matrix(rng, horizon, count)
    filled = np.arange(times.shape[1])[None, :] < counts[:, None]
    marks = np.zeros(times.shape)
    marks[filled] = spec.mark.sample(rng, int(counts.sum()))
    table = build_event_table(times, counts, marks, grid)

    level = np.full(count, float(spec.initial_level))
    paths = np.zeros((count, len(grid))) if grid is not None else None
    records: List[PathRecord] = []
    local_records = max(0, record_paths - reps.start)
    records.extend(PathRecord(reps.start + r, 0.0, float(spec.initial_level), "initial") for r in range(min(count, local_records)))

    clock = np.zeros(count)
    for column in range(table.width):
        now = table.times[:, column]
        if spec.variant == StorageVariant.THRESHOLD:
            level = threshold_drain(level, now - clock, c, rate)
        else:
            level = level * np.exp(-rate * (now - clock))
        clock = now
        arriving = table.kinds[:, column] == ARRIVAL
        if np.any(arriving):
            jump = table.values[:, column]
            if spec.variant == StorageVariant.THRESHOLD:
                level = np.where(arriving, level + jump, level)
            else:
                level = np.where(arriving, finite_jump(level, jump, c), level)
        if paths is not None:
            sampled = table.kinds[:, column] == SAMPLE
            paths[sampled, table.sample_index[sampled, column]] = level[sampled]
        if local_records:
            record_column(records, table, column, level, local_records, reps.start)

    if spec.variant == StorageVariant.THRESHOLD:
        level = threshold_drain(level, horizon - clock, c, rate)
    else:
        level = level * np.exp(-rate * (horizon - clock))
    return level, paths, records


def simulate_storage(
    spec: StorageSpec,
    horizon: float,
    reps: int,
    seed: int,
    grid: Optional[Sequence[float]] = None,
    record_paths: int = 0,
    numerics: Optional[NumericSettings] = None,
    workers: Optional[int] = None,
) -> SimResult:
    """
    Simulate `reps` independent storage-process paths on [0, horizon].

    The shot-noise level is evaluated exactly at the requested times; the
    threshold and finite variants are evolved in closed form between jumps
    and need exponential service.

    Raises:
        UnsupportedConfigurationError: Bounded variant with non-exponential service
        ParameterDomainError: Nonpositive horizon or replication count
    """
    grid = _check_run(horizon, reps, grid)
    numerics = resolve_numerics(numerics)
    if spec.variant == StorageVariant.SHOT_NOISE:
        engine = _shot_noise_block
    else:
        _check_exponential(spec)
        engine = _bounded_block
    logger.info(f"Simulating {reps} {spec.variant.value} storage paths to t={horizon:g}")

    blocks = block_bounds(reps, numerics.replication_block)
    outputs = WorkerPool.map_ordered(
        lambda item: engine(spec, horizon, item[1], seed, item[0], grid, record_paths),
        list(enumerate(blocks)),
        numerics,
        workers,
    )
    if any(np.any(~np.isfinite(out[0])) for out in outputs):
        raise ParameterDomainError("Storage simulation produced non-finite levels")
    return SimResult(
        terminal=np.concatenate([out[0] for out in outputs]),
        seed=int(seed),
        reps=int(reps),
        horizon=float(horizon),
        scale=1.0,
        grid=grid,
        paths=np.vstack([out[1] for out in outputs]) if grid is not None else None,
        path_records=[record for out in outputs for record in out[2]],
        spec=spec.describe(),
    )

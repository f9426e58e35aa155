"""
Batch-arrival queue simulation.

Two engines produce the same laws:

- The lockstep engine handles exponential, independent service. It moves a
  whole block of replications from event to event and samples the number of
  jobs left after each gap exactly (binomial thinning below the server count,
  Poisson departures plus a beta-distributed hitting time above it).
- The job-level engine handles everything else (general service, dependent
  durations within a batch, busy-server accounting). It tracks each job's
  start and departure with a heap of server free times.
"""

import heapq
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..app_settings import NumericSettings, resolve_numerics
from ..errors import ParameterDomainError, UnsupportedConfigurationError
from ..marks import DeterministicBatch, ExponentialService
from ..workers import WorkerPool
from .dependence import sample_dependent_services
from .events import ARRIVAL, SAMPLE, build_event_table, record_column
from .seeding import block_bounds, replication_rng
from .specs import (
    DependenceMode,
    Discipline,
    PathRecord,
    PoissonArrivals,
    QueueSpec,
    SimResult,
)

logger = logging.getLogger(__name__)


def _check_run(horizon: float, reps: int, grid: Optional[Sequence[float]]) -> Optional[np.ndarray]:
    if not horizon > 0 or not math.isfinite(horizon):
        raise ParameterDomainError(f"Simulation horizon must be positive, got {horizon}")
    if int(reps) < 1:
        raise ParameterDomainError(f"Replication count must be >= 1, got {reps}")
    if grid is None:
        return None
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) < 0) or np.any(grid < 0) or np.any(grid > horizon):
        raise ParameterDomainError("Sampling grid must be sorted and lie within [0, horizon]")
    return grid


# ---------------------------------------------------------------------------
# Lockstep engine
# ---------------------------------------------------------------------------


def _evolve_exponential(
    jobs: np.ndarray,
    gap: np.ndarray,
    servers: Optional[int],
    rate: float,
    discipline: Discipline,
    rng: np.random.Generator,
) -> np.ndarray:
    """Exact number of jobs left after `gap` time units without arrivals."""
    survive = np.exp(-rate * gap)
    if servers is None or discipline != Discipline.DELAY_FCFS:
        return rng.binomial(jobs, survive)

    out = jobs.copy()
    low = jobs <= servers
    if np.any(low):
        out[low] = rng.binomial(jobs[low], survive[low])
    high = ~low
    if np.any(high):
        excess = jobs[high] - servers
        span = gap[high]
        done = rng.poisson(servers * rate * span)
        waiting_left = done < excess
        level = np.empty_like(excess)
        level[waiting_left] = jobs[high][waiting_left] - done[waiting_left]
        drained = ~waiting_left
        if np.any(drained):
            # the excess-th departure, given `done` departures in the gap
            k = excess[drained]
            hit = span[drained] * rng.beta(k, done[drained] - k + 1)
            level[drained] = rng.binomial(servers, np.exp(-rate * (span[drained] - hit)))
        out[high] = level
    return out


def _lockstep_block(
    spec: QueueSpec,
    horizon: float,
    reps: range,
    seed: int,
    block_index: int,
    grid: Optional[np.ndarray],
    record_paths: int,
    fixed_epochs: Optional[np.ndarray],
) -> Tuple[np.ndarray, Optional[np.ndarray], List[PathRecord]]:
    rng = replication_rng(seed, block_index)
    count = len(reps)
    if fixed_epochs is not None:
        times = np.broadcast_to(fixed_epochs, (count, len(fixed_epochs))).copy()
        counts = np.full(count, len(fixed_epochs), dtype=np.int64)
    else:
        times, counts = spec.arrivals.epoch_matrix(rng, horizon, count)
    filled = np.arange(times.shape[1])[None, :] < counts[:, None]
    sizes = np.zeros(times.shape, dtype=np.int64)
    sizes[filled] = spec.batch.sample(rng, int(counts.sum()))
    table = build_event_table(times, counts, sizes, grid)

    rate = spec.service.rate
    servers = None if spec.servers is None else int(spec.servers)
    jobs = np.full(count, int(spec.initial_jobs), dtype=np.int64)
    paths = np.zeros((count, len(grid))) if grid is not None else None
    records: List[PathRecord] = []
    if record_paths > reps.start:
        records.extend(PathRecord(reps.start + r, 0.0, float(spec.initial_jobs), "initial") for r in range(min(count, record_paths - reps.start)))

    clock = np.zeros(count)
    for column in range(table.width):
        now = table.times[:, column]
        jobs = _evolve_exponential(jobs, now - clock, servers, rate, spec.discipline, rng)
        clock = now
        arriving = table.kinds[:, column] == ARRIVAL
        batch = table.values[:, column]
        if spec.discipline == Discipline.PARTIAL_BLOCKING:
            batch = np.minimum(batch, servers - jobs)
        jobs = jobs + np.where(arriving, batch, 0)
        if paths is not None:
            sampled = table.kinds[:, column] == SAMPLE
            paths[sampled, table.sample_index[sampled, column]] = jobs[sampled]
        if record_paths > reps.start:
            record_column(records, table, column, jobs, record_paths - reps.start, reps.start)

    jobs = _evolve_exponential(jobs, horizon - clock, servers, rate, spec.discipline, rng)
    return jobs.astype(float), paths, records


# ---------------------------------------------------------------------------
# Job-level engine
# ---------------------------------------------------------------------------


def _batch_durations(spec: QueueSpec, sizes: np.ndarray, rng: np.random.Generator) -> List[np.ndarray]:
    if spec.dependence == DependenceMode.INDEPENDENT or spec.dependence_rho == 0.0:
        flat = spec.service.sample(rng, int(sizes.sum()))
        return np.split(flat, np.cumsum(sizes)[:-1]) if len(sizes) else []
    return [
        sample_dependent_services(spec.dependence, spec.dependence_rho, int(b), spec.service, rng)
        if b > 0
        else np.empty(0)
        for b in sizes
    ]


def _fcfs_schedule(arrivals: np.ndarray, durations: np.ndarray, servers: int) -> np.ndarray:
    """Start times under first-come first-served with `servers` identical servers."""
    free = [0.0] * servers
    starts = np.empty_like(arrivals)
    for i, (arrival, duration) in enumerate(zip(arrivals.tolist(), durations.tolist())):
        start = max(arrival, free[0])
        heapq.heapreplace(free, start + duration)
        starts[i] = start
    return starts


def _blocking_schedule(
    epochs: np.ndarray, batches: List[np.ndarray], servers: int, initial: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Admitted jobs' arrival times and durations, plus the admitted count per batch."""
    busy = [float(d) for d in initial]
    heapq.heapify(busy)
    arrivals: List[float] = [0.0] * len(initial)
    durations: List[float] = [float(d) for d in initial]
    admitted = np.zeros(len(epochs), dtype=np.int64)
    for i, (epoch, batch) in enumerate(zip(epochs.tolist(), batches)):
        while busy and busy[0] <= epoch:
            heapq.heappop(busy)
        take = min(len(batch), servers - len(busy))
        admitted[i] = take
        for duration in batch[:take].tolist():
            heapq.heappush(busy, epoch + duration)
            arrivals.append(epoch)
            durations.append(duration)
    return np.asarray(arrivals, dtype=float), np.asarray(durations, dtype=float), admitted


def _job_level_rep(
    spec: QueueSpec,
    horizon: float,
    rng: np.random.Generator,
    grid: Optional[np.ndarray],
    warmup: float,
    record: bool,
    rep_index: int,
    fixed_epochs: Optional[np.ndarray],
) -> Tuple[float, Optional[np.ndarray], Optional[float], List[PathRecord]]:
    epochs = fixed_epochs if fixed_epochs is not None else spec.arrivals.epochs(rng, horizon)
    sizes = spec.batch.sample(rng, len(epochs))
    batches = _batch_durations(spec, sizes, rng)
    initial = spec.residual_service.sample(rng, int(spec.initial_jobs))

    if spec.discipline == Discipline.PARTIAL_BLOCKING:
        arrivals, durations, admitted = _blocking_schedule(epochs, batches, int(spec.servers), initial)
        starts = arrivals
    else:
        admitted = sizes
        arrivals = np.concatenate([np.zeros(len(initial)), np.repeat(epochs, sizes)])
        durations = np.concatenate([initial] + list(batches)) if len(arrivals) else np.empty(0)
        if spec.discipline == Discipline.INFINITE:
            starts = arrivals
        else:
            starts = _fcfs_schedule(arrivals, durations, int(spec.servers))
    departures = starts + durations

    terminal = float(np.count_nonzero(departures > horizon))

    path = None
    if grid is not None:
        ordered = np.sort(departures)
        path = np.searchsorted(arrivals, grid, side="right") - np.searchsorted(ordered, grid, side="right")

    busy = None
    if spec.servers is not None and horizon > warmup:
        overlap = np.minimum(departures, horizon) - np.maximum(starts, warmup)
        busy = float(np.sum(np.clip(overlap, 0.0, None)) / (spec.servers * (horizon - warmup)))

    records: List[PathRecord] = []
    if record:
        records.append(PathRecord(rep_index, 0.0, float(len(initial)), "initial"))
        gone = np.sort(departures[departures <= horizon])
        stamps = np.concatenate([epochs, gone])
        steps = np.concatenate([admitted.astype(float), -np.ones(len(gone))])
        names = np.array(["arrival"] * len(epochs) + ["departure"] * len(gone))
        order = np.argsort(stamps, kind="stable")
        levels = len(initial) + np.cumsum(steps[order])
        records.extend(
            PathRecord(rep_index, float(t), float(v), str(e))
            for t, v, e in zip(stamps[order], levels, names[order])
        )
    return terminal, path, busy, records


def _job_level_block(
    spec: QueueSpec,
    horizon: float,
    reps: range,
    seed: int,
    grid: Optional[np.ndarray],
    warmup: float,
    record_paths: int,
    fixed_epochs: Optional[np.ndarray],
) -> Tuple[np.ndarray, Optional[np.ndarray], List[float], List[PathRecord]]:
    terminals, paths, busy, records = [], [], [], []
    for rep in reps:
        rng = replication_rng(seed, rep)
        terminal, path, frac, recs = _job_level_rep(
            spec, horizon, rng, grid, warmup, rep < record_paths, rep, fixed_epochs
        )
        terminals.append(terminal)
        paths.append(path)
        if frac is not None:
            busy.append(frac)
        records.extend(recs)
    stacked = np.vstack(paths).astype(float) if grid is not None else None
    return np.asarray(terminals), stacked, busy, records


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def simulate_queue(
    spec: QueueSpec,
    horizon: float,
    reps: int,
    seed: int,
    grid: Optional[Sequence[float]] = None,
    record_paths: int = 0,
    track_busy: bool = False,
    fixed_epochs: Optional[Sequence[float]] = None,
    numerics: Optional[NumericSettings] = None,
    workers: Optional[int] = None,
) -> SimResult:
    """
    Simulate `reps` independent replications of a batch-arrival queue on [0, horizon].

    Args:
        spec: Queue parameterisation
        horizon: Terminal time t > 0
        reps: Number of replications, at least 1
        seed: Master seed; sub-streams are derived per replication block
        grid: Optional sorted sample times in [0, horizon] for path sampling
        record_paths: Number of leading replications whose event paths are kept
        track_busy: Compute the post-warm-up busy-server fraction (forces the
            job-level engine)
        fixed_epochs: Use these arrival epochs in every replication
        numerics: Warm-up fraction, block size and worker count
        workers: Explicit worker count (overrides settings)

    Returns:
        SimResult with terminal queue lengths, scaled by the batch index n
    """
    grid = _check_run(horizon, reps, grid)
    numerics = resolve_numerics(numerics)
    if fixed_epochs is not None:
        fixed_epochs = np.sort(np.asarray(fixed_epochs, dtype=float))
        fixed_epochs = fixed_epochs[(fixed_epochs >= 0) & (fixed_epochs <= horizon)]
    warmup = numerics.warmup_fraction * horizon
    exact = spec.uses_exact_engine and not track_busy
    logger.info(
        f"Simulating {reps} replications of {spec.discipline.value} queue (n={spec.batch.n}, "
        f"servers={spec.servers}) to t={horizon:g} with the {'lockstep' if exact else 'job-level'} engine"
    )

    if exact:
        blocks = block_bounds(reps, numerics.replication_block)
        outputs = WorkerPool.map_ordered(
            lambda item: _lockstep_block(spec, horizon, item[1], seed, item[0], grid, record_paths, fixed_epochs),
            list(enumerate(blocks)),
            numerics,
            workers,
        )
        busy_values: List[float] = []
    else:
        blocks = block_bounds(reps, max(1, numerics.replication_block // 16))
        outputs = WorkerPool.map_ordered(
            lambda block: _job_level_block(spec, horizon, block, seed, grid, warmup, record_paths, fixed_epochs),
            blocks,
            numerics,
            workers,
        )
        busy_values = [value for out in outputs for value in out[2]]
        outputs = [(out[0], out[1], out[3]) for out in outputs]

    terminal = np.concatenate([out[0] for out in outputs])
    paths = np.vstack([out[1] for out in outputs]) if grid is not None else None
    records = [record for out in outputs for record in out[2]]
    busy = float(np.mean(busy_values)) if track_busy and busy_values else None
    return SimResult(
        terminal=terminal,
        seed=int(seed),
        reps=int(reps),
        horizon=float(horizon),
        scale=float(spec.batch.n),
        busy_fraction=busy,
        grid=grid,
        paths=paths,
        path_records=records,
        spec=spec.describe(),
    )


def busy_fraction(
    spec: QueueSpec,
    horizon: float,
    reps: int,
    seed: int,
    numerics: Optional[NumericSettings] = None,
    workers: Optional[int] = None,
) -> float:
    """
    Time-average fraction of busy servers after the warm-up, averaged over replications.

    Raises:
        UnsupportedConfigurationError: Spec has infinitely many servers
    """
    if spec.servers is None:
        raise UnsupportedConfigurationError("Busy-server fraction needs a finite server pool")
    result = simulate_queue(spec, horizon, reps, seed, track_busy=True, numerics=numerics, workers=workers)
    if result.busy_fraction is None:
        raise ParameterDomainError("Warm-up covers the whole horizon; no busy time observed")
    return result.busy_fraction


def dependence_study(
    n: int = 1000,
    c: float = 1.5,
    arrival_rate: float = 1.0,
    horizon: float = 10.0,
    modes: Sequence[DependenceMode] = (
        DependenceMode.COPY_FIRST,
        DependenceMode.COPY_PREVIOUS,
        DependenceMode.AVERAGE_PREVIOUS,
    ),
    rhos: Sequence[float] = (0.0, 0.1, 0.5, 0.9, 1.0),
    seed: int = 0,
    grid_points: int = 201,
    numerics: Optional[NumericSettings] = None,
) -> pd.DataFrame:
    """
    Normalised delay-queue paths under within-batch service dependence.

    Deterministic batches of size n, unit-rate exponential service and cn
    servers; the arrival epochs are drawn once and shared by every run.

    Returns:
        Table with a `time` column and one `<mode>@rho=<rho>` column per run
    """
    epochs = PoissonArrivals(arrival_rate).epochs(replication_rng(seed, 0), horizon)
    grid = np.linspace(0.0, horizon, grid_points)
    servers = int(math.ceil(round(c * n, 9)))
    columns: Dict[str, np.ndarray] = {"time": grid}
    for mode in modes:
        for rho in rhos:
            spec = QueueSpec(
                arrivals=PoissonArrivals(arrival_rate),
                batch=DeterministicBatch(n),
                service=ExponentialService(1.0),
                servers=servers,
                dependence=DependenceMode(mode),
                dependence_rho=float(rho),
            )
            result = simulate_queue(
                spec, horizon, 1, seed + 1, grid=grid, fixed_epochs=epochs, track_busy=True, numerics=numerics, workers=1
            )
            columns[f"{DependenceMode(mode).value}@rho={rho:g}"] = result.paths[0] / n
    logger.info(f"Dependence study finished: {len(columns) - 1} paths on {len(epochs)} shared epochs")
    return pd.DataFrame(columns)

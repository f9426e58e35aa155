"""Padded per-replication event tables shared by the lockstep engines."""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .specs import PathRecord

PAD, ARRIVAL, SAMPLE = 0, 1, 2
_EVENT_NAMES = {ARRIVAL: "arrival", SAMPLE: "sample"}


@dataclass
class EventTable:
    """
    Events of a block of replications, merged with the sampling grid.

    All arrays have shape (reps, width); row r lists replication r's events
    in time order, arrivals ahead of grid samples at equal times, followed by
    no-op padding at the horizon.
    """

    times: np.ndarray
    kinds: np.ndarray
    values: np.ndarray
    sample_index: np.ndarray

    @property
    def width(self) -> int:
        return self.times.shape[1]


def build_event_table(
    times: np.ndarray,
    counts: np.ndarray,
    values: np.ndarray,
    grid: Optional[np.ndarray],
) -> EventTable:
    """Merge padded arrival epochs (with their jump values) and the grid."""
    reps, width = times.shape
    kinds = np.where(np.arange(width)[None, :] < counts[:, None], ARRIVAL, PAD).astype(np.int8)
    sample_index = np.full((reps, width), -1, dtype=np.int64)
    values = np.where(kinds == ARRIVAL, values, 0)
    if grid is None or len(grid) == 0:
        return EventTable(times, kinds, values, sample_index)

    g = len(grid)
    times = np.hstack([times, np.broadcast_to(np.asarray(grid, float), (reps, g))])
    kinds = np.hstack([kinds, np.full((reps, g), SAMPLE, dtype=np.int8)])
    values = np.hstack([values, np.zeros((reps, g), dtype=values.dtype)])
    sample_index = np.hstack([sample_index, np.broadcast_to(np.arange(g), (reps, g))])
    order = np.argsort(times, axis=1, kind="stable")
    return EventTable(
        np.take_along_axis(times, order, axis=1),
        np.take_along_axis(kinds, order, axis=1),
        np.take_along_axis(values, order, axis=1),
        np.take_along_axis(sample_index, order, axis=1),
    )


def record_column(
    records: List[PathRecord],
    table: EventTable,
    column: int,
    state: np.ndarray,
    record_rows: int,
    offset: int,
) -> None:
    """Append the post-event state of the first record_rows replications."""
    for r in range(min(record_rows, table.times.shape[0])):
        kind = int(table.kinds[r, column])
        if kind == PAD:
            continue
        records.append(PathRecord(offset + r, float(table.times[r, column]), float(state[r]), _EVENT_NAMES[kind]))

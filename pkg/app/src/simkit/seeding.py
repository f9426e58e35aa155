"""Deterministic sub-stream derivation for replications."""

from typing import List

import numpy as np


def replication_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for one replication (or one replication block) of a master seed."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),)))


def block_bounds(reps: int, block: int) -> List[range]:
    """Fixed partition of replication indices into blocks of at most `block`."""
    block = max(1, int(block))
    return [range(start, min(start + block, reps)) for start in range(0, reps, block)]

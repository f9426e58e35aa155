"""Service durations with dependence between jobs of the same batch."""

from typing import Union

import numpy as np

from ..errors import ParameterDomainError
from ..marks import ServiceDistribution
from .specs import DependenceMode


def _coerce_mode(mode: Union[str, DependenceMode]) -> DependenceMode:
    try:
        return DependenceMode(mode)
    except ValueError as e:
        raise ParameterDomainError(f"Unknown dependence mode: {mode!r}") from e


def sample_dependent_services(
    mode: Union[str, DependenceMode],
    rho: float,
    size: int,
    service: ServiceDistribution,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Draw the service durations of one batch.

    The first duration is always a fresh draw. Every later duration follows
    the mode's rule with probability rho and is a fresh draw otherwise:
    copy_first repeats duration 1, copy_previous repeats duration j-1, and
    average_previous takes the mean of durations 1..j-1.

    Args:
        mode: Dependence mode (independent ignores rho)
        rho: Dependence probability in [0, 1]
        size: Batch size, at least 1
        service: Law of the fresh draws
        rng: Random generator

    Returns:
        Array of `size` durations in job order
    """
    mode = _coerce_mode(mode)
    if not 0.0 <= rho <= 1.0:
        raise ParameterDomainError(f"Dependence parameter rho must lie in [0, 1], got {rho}")
    if size < 1:
        raise ParameterDomainError(f"Batch size must be >= 1, got {size}")

    fresh = service.sample(rng, size)
    if mode == DependenceMode.INDEPENDENT or size == 1:
        return fresh
    dependent = rng.uniform(0.0, 1.0, size) < rho
    dependent[0] = False

    if mode == DependenceMode.COPY_FIRST:
        return np.where(dependent, fresh[0], fresh)

    if mode == DependenceMode.COPY_PREVIOUS:
        # each dependent job inherits the most recent fresh draw
        source = np.where(dependent, 0, np.arange(size))
        source = np.maximum.accumulate(source)
        return fresh[source]

    out = fresh.copy()
    running = out[0]
    for j in range(1, size):
        if dependent[j]:
            out[j] = running / j
        running += out[j]
    return out

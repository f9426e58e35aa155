"""Adaptive quadrature wrapper that refuses to return unconverged results."""

import logging
from typing import Callable, Optional, Sequence

from scipy.integrate import quad

from .app_settings import NumericSettings, resolve_numerics
from .errors import QuadratureError

logger = logging.getLogger(__name__)

# Leading words of the QUADPACK ier=2 message
ROUNDOFF_MESSAGE = "The occurrence of roundoff error is detected"


def adaptive_quad(
    func: Callable[[float], float],
    lower: float,
    upper: float,
    numerics: Optional[NumericSettings] = None,
    points: Optional[Sequence[float]] = None,
    label: str = "integral",
) -> float:
    """
    Integrate func over [lower, upper] with QUADPACK adaptive subdivision.

    Args:
        func: Scalar integrand
        lower: Lower limit (may be -inf)
        upper: Upper limit (may be inf)
        numerics: Tolerances and subdivision cap
        points: Optional interior breakpoints (finite limits only)
        label: Name used in error messages

    Returns:
        Integral value

    Raises:
        QuadratureError: QUADPACK reported anything but roundoff within the requested tolerance
    """
    numerics = resolve_numerics(numerics)
    kwargs = {
        "epsrel": numerics.quad_rel_tol,
        "epsabs": numerics.quad_abs_tol,
        "limit": numerics.quad_limit,
        "full_output": 1,
    }
    if points:
        kwargs["points"] = list(points)

    result = quad(func, lower, upper, **kwargs)
    # quad appends a message only when ier != 0
    if len(result) > 3:
        value, abserr = result[0], result[1]
        message = str(result[3]).strip().splitlines()[0] if result[3] else "unknown failure"
        requested = max(numerics.quad_abs_tol, numerics.quad_rel_tol * abs(value))
        if message.startswith(ROUNDOFF_MESSAGE) and abserr <= requested:
            logger.debug(f"Accepting {label} despite QUADPACK note: {message}")
            return float(value)
        logger.error(f"Quadrature failed for {label}: {message} (estimate {value}, error {abserr})")
        raise QuadratureError(
            f"Quadrature did not converge for {label}: {message}",
            {"estimate": value, "abserr": abserr, "lower": lower, "upper": upper},
        )
    return float(result[0])

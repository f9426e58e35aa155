"""
Legendre exponential sums approximating the indicator 1{x <= c}.

L_m(x) = sum_{k=1}^m a_k^m exp(-k x / c) converges to 1{x <= c}, so applying
the same coefficients to a Laplace transform evaluated at k/c approximates a
CDF, and applying them to the transform's derivative approximates a truncated
mean. The coefficients grow like binomial products (about 1e17 at m = 25) and
alternate in sign, so every sum is accumulated exactly in decimal arithmetic
and carries a rounding bound derived from the accuracy of its inputs.
"""

import logging
import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from enum import Enum
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .app_settings import NumericSettings, resolve_numerics
from .errors import EstimationError, ParameterDomainError
from .marks import CLOSED_FORM_REL_ERROR
from .quadrature import adaptive_quad

logger = logging.getLogger(__name__)

# Decimal digits carried through coefficient and sum evaluation, plus one per order
DECIMAL_DIGITS = 60

# Largest log-magnitude that still reconstructs to a finite double
_LOG_DOUBLE_MAX = 709.0

# Fewest surviving candidates for which the pre-convergence filter runs
CONVERGENCE_CHECK_MIN = 4


ArrayLike = Union[float, np.ndarray]


class EstimateKind(str, Enum):
    PROBABILITY = "probability"
    NONNEG_MEAN = "nonneg_mean"


@dataclass(frozen=True)
class LegendreCoefficients:
    """
    The coefficients a_1^m .. a_m^m of order m.

    Stored as signs and natural-log magnitudes; the exact decimal values are
    kept alongside for cancellation-free sums. healthy is False when some
    magnitude overflows a double (from about m = 408), which makes every
    candidate of that order unusable.
    """

    order: int
    signs: Tuple[int, ...]
    log_magnitudes: Tuple[float, ...]
    healthy: bool
    exact: Tuple[Decimal, ...] = field(repr=False, compare=False, default=())

    @property
    def values(self) -> np.ndarray:
        """Reconstructed double-precision coefficients."""
        return np.asarray(self.signs, dtype=float) * np.exp(np.asarray(self.log_magnitudes))

    @property
    def magnitudes(self) -> np.ndarray:
        return np.exp(np.asarray(self.log_magnitudes))


def _precision(m: int) -> int:
    # the 3F2 sum cancels roughly 0.77 m decimal digits
    return DECIMAL_DIGITS + int(m)


def _series_terms(m: int, inv_e: Decimal) -> List[Decimal]:
    """(-m)_i (m+1)_i / (i!)^2 e^-i = (-1)^i C(m,i) C(m+i,i) e^-i for i = 0..m."""
    terms = []
    power = Decimal(1)
    for i in range(m + 1):
        terms.append((-1) ** i * math.comb(m, i) * math.comb(m + i, i) * power)
        power *= inv_e
    return terms


def _series_factor(k: int, terms: Sequence[Decimal]) -> Decimal:
    """Terminating 3F2(k, -m, m+1; 1, k+1; 1/e) as its m+1 term sum."""
    # (k)_i / (k+1)_i = k / (k+i)
    return sum((term * k / (k + i) for i, term in enumerate(terms)), Decimal(0))


@lru_cache(maxsize=64)
def coefficients(m: int) -> LegendreCoefficients:
    """
    Coefficients of the order-m exponential sum.

    a_k^m = (-1)^(k+1) C(m,k) C(m+k,k) 3F2(k, -m, m+1; 1, k+1; 1/e)

    The order is unhealthy when a coefficient is zero or its log-magnitude is
    beyond double range, which first happens near m = 408.

    Raises:
        ParameterDomainError: m < 1
    """
    if int(m) != m or m < 1:
        raise ParameterDomainError(f"Legendre order must be a positive integer, got {m}")
    m = int(m)
    signs, logs, exact = [], [], []
    healthy = True
    with localcontext() as ctx:
        ctx.prec = _precision(m)
        terms = _series_terms(m, Decimal(-1).exp())
        for k in range(1, m + 1):
            value = (-1) ** (k + 1) * math.comb(m, k) * math.comb(m + k, k) * _series_factor(k, terms)
            exact.append(+value)
            if value == 0:
                healthy = False
                signs.append(0)
                logs.append(-math.inf)
                continue
            log_mag = float(abs(value).ln())
            if not math.isfinite(log_mag) or log_mag > _LOG_DOUBLE_MAX:
                healthy = False
            signs.append(1 if value > 0 else -1)
            logs.append(log_mag)
    if not healthy:
        logger.warning(f"Legendre coefficients of order {m} are not representable in double precision")
    return LegendreCoefficients(m, tuple(signs), tuple(logs), healthy, tuple(exact))


def _exact_sum(coeffs: LegendreCoefficients, values: Sequence[float]) -> float:
    with localcontext() as ctx:
        ctx.prec = _precision(coeffs.order)
        total = sum((a * Decimal(float(v)) for a, v in zip(coeffs.exact, values)), Decimal(0))
        return float(total)


def indicator_approx(coeffs: LegendreCoefficients, c: float, x: ArrayLike) -> ArrayLike:
    """
    L_m(x) = sum_k a_k^m exp(-k x / c).

    Raises:
        ParameterDomainError: c <= 0 or x < 0
    """
    if not c > 0:
        raise ParameterDomainError(f"Indicator threshold c must be positive, got {c}")
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0):
        raise ParameterDomainError("Indicator approximation is defined for x >= 0")

    def one(point: float) -> float:
        with localcontext() as ctx:
            ctx.prec = _precision(coeffs.order)
            w = (Decimal(-float(point)) / Decimal(float(c))).exp()
            total = Decimal(0)
            power = Decimal(1)
            for a in coeffs.exact:
                power *= w
                total += a * power
            return float(total)

    if xs.ndim == 0:
        return one(float(xs))
    return np.array([one(p) for p in xs.ravel()]).reshape(xs.shape)


@dataclass(frozen=True)
class LegendreSum:
    """One order-m candidate with the rounding bound inherited from its inputs."""

    order: int
    value: float
    rounding_bound: float
    healthy: bool = True


def legendre_sum(
    coeffs: LegendreCoefficients,
    values: Sequence[float],
    rel_errors: Optional[Union[float, Sequence[float]]] = None,
) -> LegendreSum:
    """
    sum_k a_k^m values[k-1], exact for the given doubles.

    Args:
        coeffs: Order-m coefficients
        values: Transform values at k/c for k = 1..m
        rel_errors: Relative accuracy of each value (default: closed-form accuracy)
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (coeffs.order,):
        raise ParameterDomainError(f"Order {coeffs.order} needs {coeffs.order} transform values, got {values.shape}")
    if rel_errors is None:
        rel_errors = CLOSED_FORM_REL_ERROR
    rel = np.broadcast_to(np.asarray(rel_errors, dtype=float), values.shape)
    if not np.all(np.isfinite(values)):
        return LegendreSum(coeffs.order, math.nan, math.inf, coeffs.healthy)
    total = _exact_sum(coeffs, values)
    bound = float(np.sum(coeffs.magnitudes * np.abs(values) * np.maximum(rel, CLOSED_FORM_REL_ERROR)))
    return LegendreSum(coeffs.order, total, bound, coeffs.healthy)


def cdf_candidate(
    mgf_neg: Callable[[float], float], c: float, m: int, rel_error: Optional[float] = None
) -> LegendreSum:
    """Order-m candidate for P(X <= c) from s -> E[exp(-sX)]."""
    if not c > 0:
        raise ParameterDomainError(f"Threshold c must be positive, got {c}")
    coeffs = coefficients(m)
    return legendre_sum(coeffs, [mgf_neg(k / c) for k in range(1, coeffs.order + 1)], rel_error)


def truncated_mean_candidate(
    mgf_neg_deriv: Callable[[float], float], c: float, m: int, rel_error: Optional[float] = None
) -> LegendreSum:
    """Order-m candidate for E[X 1{X <= c}] from s -> E[X exp(-sX)]."""
    if not c > 0:
        raise ParameterDomainError(f"Threshold c must be positive, got {c}")
    coeffs = coefficients(m)
    return legendre_sum(coeffs, [mgf_neg_deriv(k / c) for k in range(1, coeffs.order + 1)], rel_error)


def cdf_from_mgf(mgf_neg: Callable[[float], float], c: float, m: int) -> float:
    """Raw order-m approximation of P(X <= c); no clamping."""
    return cdf_candidate(mgf_neg, c, m).value


def truncated_mean_from_mgf(mgf_neg_deriv: Callable[[float], float], c: float, m: int) -> float:
    """Raw order-m approximation of E[X 1{X <= c}]; no clamping."""
    return truncated_mean_candidate(mgf_neg_deriv, c, m).value


# ---------------------------------------------------------------------------
# Stabilised averaging over orders
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LegendreEstimate:
    """Candidates over a range of orders, the surviving subset and their average."""

    kind: EstimateKind
    orders: Tuple[int, ...]
    values: Tuple[float, ...]
    kept_orders: Tuple[int, ...]
    kept_values: Tuple[float, ...]
    value: float
    spread: float
    dropped: Dict[int, str] = field(default_factory=dict)

    def diagnostics(self) -> Dict[str, object]:
        return {
            "kind": self.kind.value,
            "orders": list(self.orders),
            "values": list(self.values),
            "kept_orders": list(self.kept_orders),
            "kept_values": list(self.kept_values),
            "value": self.value,
            "spread": self.spread,
            "dropped": dict(self.dropped),
        }

    def describe(self) -> str:
        """Multi-line human-readable account of the filtering."""
        lines = [f"{self.kind.value} estimate {self.value:.6g} (spread {self.spread:.3g}, {len(self.kept_orders)} kept)"]
        for order, value in zip(self.orders, self.values):
            note = self.dropped.get(order, "kept")
            lines.append(f"  m={order:>3d}  {value: .10g}  {note}")
        return "\n".join(lines)


CandidateInput = Union[Iterable[Union[LegendreSum, float, Tuple[int, float]]], Mapping[int, float]]


def _normalise_candidates(candidates: CandidateInput) -> list:
    if isinstance(candidates, Mapping):
        return [LegendreSum(int(m), float(v), 0.0) for m, v in candidates.items()]
    out = []
    for index, item in enumerate(candidates):
        if isinstance(item, LegendreSum):
            out.append(item)
        elif isinstance(item, tuple):
            out.append(LegendreSum(int(item[0]), float(item[1]), 0.0))
        else:
            out.append(LegendreSum(index + 1, float(item), 0.0))
    return out


def _drop_pre_convergence(
    kept_orders: list, kept_values: list, dropped: Dict[int, str], numerics: NumericSettings
) -> Tuple[list, list]:
    """
    Drop low orders that have not yet settled.

    The reference is the median over the upper half of the surviving orders;
    a lower-half candidate further from it than convergence_gap (relative to
    max(1, |reference|)) or twice the upper-half spread is dropped.
    """
    if len(kept_orders) < CONVERGENCE_CHECK_MIN:
        return kept_orders, kept_values
    ranked = sorted(zip(kept_orders, kept_values))
    split = len(ranked) // 2
    upper = [value for _, value in ranked[split:]]
    reference = float(np.median(upper))
    allowed = max(numerics.convergence_gap * max(1.0, abs(reference)), 2.0 * (max(upper) - min(upper)))
    first_upper = ranked[split][0]
    orders, values = [], []
    for order, value in zip(kept_orders, kept_values):
        gap = abs(value - reference)
        if order < first_upper and gap > allowed:
            dropped[order] = f"pre-convergence gap {gap:.2g}"
        else:
            orders.append(order)
            values.append(value)
    return orders, values


def stabilize(
    candidates: CandidateInput,
    kind: Union[EstimateKind, str] = EstimateKind.PROBABILITY,
    numerics: Optional[NumericSettings] = None,
) -> LegendreEstimate:
    """
    Drop numerically invalid candidates and average the rest.

    Probability candidates outside [-slack, 1 + slack] are dropped and the
    survivors clamped to [0, 1]; nonneg_mean candidates below zero are
    dropped. Non-finite values, unhealthy orders and candidates whose rounding
    bound exceeds max_rounding_error (relative to max(1, |value|)) are dropped
    for every kind. With at least CONVERGENCE_CHECK_MIN survivors, low orders
    still far from the higher ones are dropped as well.

    Raises:
        EstimationError: No candidate survives
    """
    numerics = resolve_numerics(numerics)
    kind = EstimateKind(kind)
    items = _normalise_candidates(candidates)
    if not items:
        raise EstimationError("No Legendre candidates supplied", {"kind": kind.value})

    dropped: Dict[int, str] = {}
    kept_orders, kept_values = [], []
    slack = numerics.probability_slack
    for item in items:
        value = item.value
        if not item.healthy:
            dropped[item.order] = "unhealthy coefficients"
        elif not math.isfinite(value):
            dropped[item.order] = "non-finite"
        elif item.rounding_bound > numerics.max_rounding_error * max(1.0, abs(value)):
            dropped[item.order] = f"rounding bound {item.rounding_bound:.2g}"
        elif kind == EstimateKind.PROBABILITY and not -slack <= value <= 1.0 + slack:
            dropped[item.order] = "outside probability range"
        elif kind == EstimateKind.NONNEG_MEAN and value < 0:
            dropped[item.order] = "negative"
        else:
            kept_orders.append(item.order)
            kept_values.append(min(max(value, 0.0), 1.0) if kind == EstimateKind.PROBABILITY else value)

    kept_orders, kept_values = _drop_pre_convergence(kept_orders, kept_values, dropped, numerics)

    orders = tuple(item.order for item in items)
    values = tuple(item.value for item in items)
    if not kept_values:
        logger.error(f"All {len(items)} Legendre candidates were filtered ({kind.value})")
        raise EstimationError(
            f"All Legendre candidates were filtered for {kind.value} estimate",
            {"orders": list(orders), "values": list(values), "dropped": dropped},
        )
    value = math.fsum(kept_values) / len(kept_values)
    estimate = LegendreEstimate(
        kind=kind,
        orders=orders,
        values=values,
        kept_orders=tuple(kept_orders),
        kept_values=tuple(kept_values),
        value=value,
        spread=max(kept_values) - min(kept_values),
        dropped=dropped,
    )
    logger.debug(estimate.describe())
    return estimate


def estimate_over_orders(
    candidate: Callable[[int], LegendreSum],
    kind: Union[EstimateKind, str] = EstimateKind.PROBABILITY,
    numerics: Optional[NumericSettings] = None,
    orders: Optional[Sequence[int]] = None,
) -> LegendreEstimate:
    """Evaluate candidate(m) for every configured order and stabilize."""
    numerics = resolve_numerics(numerics)
    orders = tuple(orders) if orders is not None else numerics.legendre_orders
    return stabilize([candidate(int(m)) for m in orders], kind, numerics)


def stabilized_cdf(
    mgf_neg: Callable[[float], float],
    c: float,
    numerics: Optional[NumericSettings] = None,
    orders: Optional[Sequence[int]] = None,
    rel_error: Optional[float] = None,
) -> LegendreEstimate:
    """Stabilized P(X <= c) over the configured orders."""
    cache: Dict[float, float] = {}

    def cached(s: float) -> float:
        if s not in cache:
            cache[s] = mgf_neg(s)
        return cache[s]

    return estimate_over_orders(
        lambda m: cdf_candidate(cached, c, m, rel_error), EstimateKind.PROBABILITY, numerics, orders
    )


def indicator_l2_error(m: int, c: float, numerics: Optional[NumericSettings] = None) -> float:
    """
    Squared L2 distance between L_m and 1{x <= c} on [0, inf).

    Integrated numerically on [0, 5c]; the tail beyond 5c is the closed form
    sum_{j,k} a_j a_k c/(j+k) exp(-5(j+k)).
    """
    coeffs = coefficients(m)

    def integrand(x: float) -> float:
        gap = indicator_approx(coeffs, c, x) - (1.0 if x <= c else 0.0)
        return gap * gap

    head = adaptive_quad(integrand, 0.0, 5.0 * c, numerics, points=[c], label=f"L2 error of order {m}")
    with localcontext() as ctx:
        ctx.prec = _precision(m)
        tail = Decimal(0)
        for j, a_j in enumerate(coeffs.exact, start=1):
            for k, a_k in enumerate(coeffs.exact, start=1):
                tail += a_j * a_k * Decimal(float(c)) / Decimal(j + k) * Decimal(-5 * (j + k)).exp()
    return head + float(tail)

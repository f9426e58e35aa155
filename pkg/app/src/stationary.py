"""
Steady-state analytics of the storage processes in the Markovian setting.

Poisson(lambda) epochs, exponential(mu) release and i.i.d. marks M. The shot
noise transform is exp(-lambda I(s)) with I(s) = E[Ein(sM)] / mu; threshold
and blocking exceedance probabilities are ratios of Legendre sums over that
transform and are averaged over a range of orders.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import gamma as gamma_fn
from scipy.special import gammainc
from scipy.stats import gamma as gamma_law

from .app_settings import NumericSettings, resolve_numerics
from .errors import ParameterDomainError, StabilityError, TruncationError
from .legendre import (
    EstimateKind,
    LegendreEstimate,
    LegendreSum,
    coefficients,
    estimate_over_orders,
    legendre_sum,
    stabilized_cdf,
)
from .marks import CLOSED_FORM_REL_ERROR, BatchDistribution, MarkDistribution
from .quadrature import adaptive_quad

logger = logging.getLogger(__name__)


class Criterion(str, Enum):
    """Staffing objective: P(psi > c), P(psi + M > c), or the blocking analogue."""

    P0 = "p0"
    P1 = "p1"
    BLOCKING = "blocking"


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ParameterDomainError(f"{name} must be positive and finite, got {value}")
    return value


@dataclass(frozen=True)
class MarkovSystem:
    """
    Poisson(lambda) jump epochs, exponential(mu) release, limiting marks and threshold c.

    c may be omitted for shot-noise-only quantities; when given, stability
    lambda E[M] < c mu is enforced.
    """

    arrival_rate: float
    service_rate: float
    mark: MarkDistribution
    c: Optional[float] = None

    def __post_init__(self):
        _positive("Arrival rate lambda", self.arrival_rate)
        _positive("Service rate mu", self.service_rate)
        if self.c is not None:
            _positive("Threshold c", self.c)
            if not self.load < self.c:
                raise StabilityError(
                    f"Unstable system: lambda E[M] / mu = {self.load:.6g} >= c = {self.c:.6g}",
                    {"load": self.load, "c": self.c},
                )

    @property
    def load(self) -> float:
        """rho = lambda E[M] / mu, the stationary mean of the shot-noise process."""
        return self.arrival_rate * self.mark.mean / self.service_rate

    def at(self, c: float) -> "MarkovSystem":
        return replace(self, c=float(c))

    def _threshold(self) -> float:
        if self.c is None:
            raise ParameterDomainError("This quantity needs a threshold c")
        return float(self.c)


# ---------------------------------------------------------------------------
# Shot-noise transform
# ---------------------------------------------------------------------------


def shot_noise_integral(sys: MarkovSystem, s: float, numerics: Optional[NumericSettings] = None) -> float:
    """I(s) = integral_0^inf (1 - E[exp(-s M e^{-mu x})]) dx = E[Ein(sM)] / mu."""
    if s < 0:
        raise ParameterDomainError(f"Transform argument must be >= 0, got {s}")
    return sys.mark.expected_ein(s, numerics) / sys.service_rate


def shot_noise_mgf_neg(sys: MarkovSystem, s: float, numerics: Optional[NumericSettings] = None) -> float:
    """Stationary E[exp(-s psi)] = exp(-lambda I(s))."""
    return math.exp(-sys.arrival_rate * shot_noise_integral(sys, s, numerics))


@lru_cache(maxsize=8192)
def _transform_point(
    arrival_rate: float, service_rate: float, mark: MarkDistribution, s: float, numerics: NumericSettings
) -> Tuple[float, float, float, float, float]:
    """(phi, phi_rel_error, M(s), M'(s), mark_rel_error) at one argument."""
    exponent = arrival_rate * mark.expected_ein(s, numerics) / service_rate
    phi = math.exp(-exponent)
    phi_rel = exponent * mark.ein_rel_error(numerics) + CLOSED_FORM_REL_ERROR
    return (
        phi,
        phi_rel,
        mark.mgf_neg(s, numerics),
        mark.mgf_neg_deriv(s, numerics),
        mark.transform_rel_error(numerics),
    )


@dataclass(frozen=True)
class _OrderSums:
    """The four Legendre sums behind the threshold and blocking ratios."""

    order: int
    base: LegendreSum
    c1_numerator: LegendreSum
    with_mark: LegendreSum
    c2_numerator: LegendreSum

    @property
    def healthy(self) -> bool:
        return self.base.healthy

    @property
    def c1(self) -> Tuple[float, float]:
        return _ratio(self.c1_numerator, self.base)

    @property
    def c2(self) -> Tuple[float, float]:
        return _ratio(self.c2_numerator, self.with_mark)


def _ratio(numerator: LegendreSum, denominator: LegendreSum) -> Tuple[float, float]:
    if denominator.value == 0 or not math.isfinite(denominator.value):
        return math.nan, math.inf
    value = numerator.value / denominator.value
    if numerator.value == 0:
        return value, math.inf
    bound = abs(value) * (numerator.rounding_bound / abs(numerator.value) + denominator.rounding_bound / abs(denominator.value))
    return value, bound


def _order_sums(sys: MarkovSystem, m: int, numerics: NumericSettings) -> _OrderSums:
    c = sys._threshold()
    coeffs = coefficients(m)
    rows = [_transform_point(sys.arrival_rate, sys.service_rate, sys.mark, k / c, numerics) for k in range(1, m + 1)]
    phi = np.array([r[0] for r in rows])
    phi_rel = np.array([r[1] for r in rows])
    mgf = np.array([r[2] for r in rows])
    deriv = np.array([r[3] for r in rows])
    mark_rel = np.array([r[4] for r in rows])
    weight = c * sys.arrival_rate / (sys.service_rate * np.arange(1, m + 1))
    gap = 1.0 - mgf
    gap_rel = mark_rel * mgf / np.maximum(gap, np.finfo(float).tiny)

    return _OrderSums(
        order=m,
        base=legendre_sum(coeffs, phi, phi_rel),
        c1_numerator=legendre_sum(coeffs, weight * gap * phi, phi_rel + gap_rel),
        with_mark=legendre_sum(coeffs, mgf * phi, phi_rel + mark_rel),
        c2_numerator=legendre_sum(coeffs, (deriv + mgf * weight * gap) * phi, phi_rel + mark_rel + gap_rel),
    )


def sigma_c1(sys: MarkovSystem, m: int, numerics: Optional[NumericSettings] = None) -> float:
    """Order-m sigma^(C1): approximates E[psi | psi <= c]."""
    return _order_sums(sys, int(m), resolve_numerics(numerics)).c1[0]


def sigma_c2(sys: MarkovSystem, m: int, numerics: Optional[NumericSettings] = None) -> float:
    """Order-m sigma^(C2): approximates E[psi + M | psi + M <= c]."""
    return _order_sums(sys, int(m), resolve_numerics(numerics)).c2[0]


def stabilized_sigma_c1(
    sys: MarkovSystem, numerics: Optional[NumericSettings] = None, orders: Optional[Sequence[int]] = None
) -> LegendreEstimate:
    numerics = resolve_numerics(numerics)

    def candidate(m: int) -> LegendreSum:
        sums = _order_sums(sys, m, numerics)
        value, bound = sums.c1
        return LegendreSum(m, value, bound, sums.healthy)

    return estimate_over_orders(candidate, EstimateKind.NONNEG_MEAN, numerics, orders)


# ---------------------------------------------------------------------------
# Exceedance probabilities
# ---------------------------------------------------------------------------


def _propagate(f: Callable[[float, float], float], c1: Tuple[float, float], c2: Tuple[float, float]) -> Tuple[float, float]:
    """Value of f(C1, C2) and a first-order bound from the bounds on C1 and C2."""
    value = f(c1[0], c2[0])
    if not math.isfinite(value) or not math.isfinite(c1[1]) or not math.isfinite(c2[1]):
        return value, math.inf
    bound = abs(f(c1[0] + c1[1], c2[0]) - value) + abs(f(c1[0], c2[0] + c2[1]) - value)
    return value, bound if math.isfinite(bound) else math.inf


def _criterion_formula(sys: MarkovSystem, criterion: Criterion) -> Callable[[float, float], float]:
    lam, mu, c = sys.arrival_rate, sys.service_rate, sys._threshold()
    rho, mean_mark = sys.load, sys.mark.mean

    def safe(num: float, den: float) -> float:
        return num / den if den != 0 else math.nan

    if criterion == Criterion.P0:
        return lambda c1, c2: safe(rho - c1, c - c1)
    if criterion == Criterion.P1:
        return lambda c1, c2: safe(rho - c2, c - c2) + safe(c1 * (c * mu / lam - mean_mark), (c - c1) * (c - c2))
    return lambda c1, c2: safe((lam + mu) / lam * c1 - c2, c - c2)


def exceedance_estimate(
    sys: MarkovSystem,
    criterion: Criterion = Criterion.P0,
    numerics: Optional[NumericSettings] = None,
    orders: Optional[Sequence[int]] = None,
) -> LegendreEstimate:
    """
    Stabilized exceedance probability for one criterion.

    Args:
        sys: Stable system with threshold c
        criterion: p0 = P(psi^C > c), p1 = P(psi^C + M > c),
            blocking = P(psi^B + M > c)
        numerics: Orders, filter slack and tolerances
        orders: Explicit order list (a single order gives the raw diagnostic)

    Raises:
        EstimationError: Every candidate was filtered
    """
    numerics = resolve_numerics(numerics)
    criterion = Criterion(criterion)
    formula = _criterion_formula(sys, criterion)

    def candidate(m: int) -> LegendreSum:
        sums = _order_sums(sys, m, numerics)
        value, bound = _propagate(formula, sums.c1, sums.c2)
        return LegendreSum(m, value, bound, sums.healthy)

    estimate = estimate_over_orders(candidate, EstimateKind.PROBABILITY, numerics, orders)
    logger.debug(f"{criterion.value} exceedance at c={sys.c:.6g}: {estimate.value:.6g}")
    return estimate


def exceedance_p0(sys: MarkovSystem, numerics: Optional[NumericSettings] = None, orders: Optional[Sequence[int]] = None) -> float:
    """P(psi^C > c) for the stationary threshold process."""
    return exceedance_estimate(sys, Criterion.P0, numerics, orders).value


def exceedance_p1(sys: MarkovSystem, numerics: Optional[NumericSettings] = None, orders: Optional[Sequence[int]] = None) -> float:
    """P(psi^C + M > c): an arriving batch finds too few free operators."""
    return exceedance_estimate(sys, Criterion.P1, numerics, orders).value


def blocking_exceedance(sys: MarkovSystem, numerics: Optional[NumericSettings] = None, orders: Optional[Sequence[int]] = None) -> float:
    """P(psi^B + M > c) for the stationary finite storage process."""
    return exceedance_estimate(sys, Criterion.BLOCKING, numerics, orders).value


def exceedance_upper_bound(sys: MarkovSystem, numerics: Optional[NumericSettings] = None) -> float:
    """Closed-form bound (rho - q E[M ^ c]) / (c - q E[M ^ c]) with q = lambda / (lambda + mu)."""
    c = sys._threshold()
    shifted = sys.arrival_rate / (sys.arrival_rate + sys.service_rate) * sys.mark.expected_min(c, numerics)
    return (sys.load - shifted) / (c - shifted)


def utilization(sys: MarkovSystem) -> float:
    """Mean busy fraction lambda E[M] / (c mu)."""
    return sys.load / sys._threshold()


def shot_noise_cdf(
    sys: MarkovSystem,
    x: float,
    numerics: Optional[NumericSettings] = None,
    orders: Optional[Sequence[int]] = None,
) -> LegendreEstimate:
    """Stabilized P(psi <= x) for the stationary shot-noise process."""
    _positive("CDF argument", x)
    numerics = resolve_numerics(numerics)
    rel = sys.arrival_rate * sys.mark.expected_ein(1.0 / x, numerics) / sys.service_rate * sys.mark.ein_rel_error(numerics)
    return stabilized_cdf(
        lambda s: shot_noise_mgf_neg(sys, s, numerics),
        x,
        numerics,
        orders,
        rel_error=max(rel, CLOSED_FORM_REL_ERROR) * 10,
    )


# ---------------------------------------------------------------------------
# Exponential-mark closed forms
# ---------------------------------------------------------------------------


def gamma_stationary_cdf(arrival_rate: float, service_rate: float, alpha: float, x: float) -> float:
    """P(psi <= x) for Exp(alpha) marks: the Gamma(lambda/mu, alpha) CDF."""
    shape = _positive("Arrival rate", arrival_rate) / _positive("Service rate", service_rate)
    _positive("Mark rate alpha", alpha)
    return float(gammainc(shape, alpha * max(float(x), 0.0)))


def _threshold_constants(arrival_rate: float, service_rate: float, alpha: float, c: float) -> Tuple[float, float, float]:
    """(shape a, exponential rate beta above c, normalising constant k1)."""
    shape = _positive("Arrival rate", arrival_rate) / _positive("Service rate", service_rate)
    _positive("Mark rate alpha", alpha)
    _positive("Threshold c", c)
    beta = alpha - arrival_rate / (c * service_rate)
    if not beta > 0:
        raise StabilityError(
            f"Unstable system: lambda = {arrival_rate:g} >= alpha c mu = {alpha * c * service_rate:g}",
            {"arrival_rate": arrival_rate, "alpha": alpha, "c": c, "service_rate": service_rate},
        )
    lower = alpha ** (-shape) * gamma_fn(shape) * gammainc(shape, alpha * c)
    upper = math.exp(-alpha * c) * c ** (shape - 1.0) / beta
    return shape, beta, 1.0 / (lower + upper)


def threshold_closed_form_density(arrival_rate: float, service_rate: float, alpha: float, x: float, c: float) -> float:
    """
    Stationary density of the threshold process for Exp(alpha) marks.

    Proportional to x^(a-1) e^(-alpha x) on (0, c] and continued by an
    exponential with rate alpha - lambda/(c mu) above c.
    """
    shape, beta, k1 = _threshold_constants(arrival_rate, service_rate, alpha, c)
    x = float(x)
    if x <= 0:
        return 0.0
    if x <= c:
        return k1 * math.exp(-alpha * x) * x ** (shape - 1.0)
    return k1 * math.exp(-alpha * c) * c ** (shape - 1.0) * math.exp(-beta * (x - c))


def threshold_closed_form_exceedance(arrival_rate: float, service_rate: float, alpha: float, c: float) -> float:
    """P(psi^C > c) for Exp(alpha) marks, the integral of the density above c."""
    shape, beta, k1 = _threshold_constants(arrival_rate, service_rate, alpha, c)
    return k1 * math.exp(-alpha * c) * c ** (shape - 1.0) / beta


def blocking_closed_form_density(arrival_rate: float, service_rate: float, alpha: float, x: float, c: float) -> float:
    """Stationary density of the finite storage process for Exp(alpha) marks: the gamma density truncated to (0, c]."""
    shape = _positive("Arrival rate", arrival_rate) / _positive("Service rate", service_rate)
    _positive("Mark rate alpha", alpha)
    _positive("Threshold c", c)
    if not 0 < x <= c:
        raise ParameterDomainError(f"Finite storage density is supported on (0, c], got x={x}")
    return float(gamma_law.pdf(x, shape, scale=1.0 / alpha) / gammainc(shape, alpha * c))


def blocking_closed_form_cdf(arrival_rate: float, service_rate: float, alpha: float, x, c: float):
    """CDF of the truncated gamma law on (0, c]."""
    shape = _positive("Arrival rate", arrival_rate) / _positive("Service rate", service_rate)
    clipped = np.clip(np.asarray(x, dtype=float), 0.0, c)
    return gammainc(shape, alpha * clipped) / gammainc(shape, alpha * c)


def integral_equation_residual(
    sys: MarkovSystem,
    density: Callable[[float], float],
    x: float,
    numerics: Optional[NumericSettings] = None,
) -> float:
    """
    (x ^ c) f(x) - (lambda/mu) integral_0^x P(M > x - y) f(y) dy.

    Zero for the stationary density of the threshold process (or of the
    shot-noise process when sys.c is None).
    """
    x = _positive("Residual point", x)
    cap = x if sys.c is None else min(x, sys.c)
    points = [sys.c] if sys.c is not None and sys.c < x else None

    def integrand(y: float) -> float:
        return float(sys.mark.sf(x - y)) * density(y)

    integral = adaptive_quad(integrand, 0.0, x, numerics, points=points, label=f"integral equation at x={x:g}")
    return cap * density(x) - sys.arrival_rate / sys.service_rate * integral


# ---------------------------------------------------------------------------
# Exact finite-n steady state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SteadyStateDistribution:
    """Normalised stationary law of the batch queue length, truncated at index K."""

    probabilities: np.ndarray
    truncation_index: int
    tail_mass_bound: float
    n: int
    servers: int
    batch_tail: np.ndarray

    def prob_exceeds(self, k: int) -> float:
        """P(Q > k)."""
        k = int(k)
        if k < 0:
            return 1.0
        return float(np.sum(self.probabilities[k + 1 :]))

    def prob_at_least(self, k: int) -> float:
        """P(Q >= k)."""
        return self.prob_exceeds(int(k) - 1)

    @property
    def prob_all_busy(self) -> float:
        """P(Q >= cn)."""
        return self.prob_at_least(self.servers)

    @property
    def prob_batch_overflow(self) -> float:
        """P(Q + B > cn), B an independent batch."""
        cn = self.servers
        head = self.probabilities[: cn + 1]
        # P(B >= cn - i + 1) for i = 0..cn
        needed = self.batch_tail[cn - np.arange(len(head))]
        return float(np.dot(head, needed) + np.sum(self.probabilities[cn + 1 :]))

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.probabilities)), self.probabilities))


def _decay_rate(offered: float, tail: np.ndarray) -> float:
    """theta in (0, 1) with offered * sum_j tail_j theta^(-j) = 1."""

    def excess(u: float) -> float:
        return offered * float(np.sum(tail * u ** np.arange(1, len(tail) + 1))) - 1.0

    upper = 1.0 + 1.0 / len(tail)
    while excess(upper) < 0:
        upper = 1.0 + 2.0 * (upper - 1.0)
    return 1.0 / brentq(excess, 1.0, upper, xtol=1e-14, rtol=1e-14)


def finite_n_steady_state(
    arrival_rate: float,
    service_rate: float,
    batch: BatchDistribution,
    c: float,
    n: Optional[int] = None,
    tail_tol: float = 1e-12,
    numerics: Optional[NumericSettings] = None,
) -> SteadyStateDistribution:
    """
    Stationary law of the M^B/M/cn queue from the level recursion.

    pi_i = lambda / (mu min(i, cn)) sum_{j=1}^{i} P(B >= j) pi_{i-j}, run from
    pi_0 = 1 until the geometric bound on the remaining mass falls below
    tail_tol, then normalised.

    Raises:
        StabilityError: lambda E[B] >= cn mu
        TruncationError: State cap reached before the tail bound was met
    """
    numerics = resolve_numerics(numerics)
    lam = _positive("Arrival rate", arrival_rate)
    mu = _positive("Service rate", service_rate)
    _positive("Tail tolerance", tail_tol)
    n = int(batch.n if n is None else n)
    servers = int(math.ceil(round(_positive("Threshold c", c) * n, 9)))
    if not lam * batch.mean < servers * mu:
        raise StabilityError(
            f"Unstable queue: lambda E[B] = {lam * batch.mean:g} >= cn mu = {servers * mu:g}",
            {"arrival_rate": lam, "batch_mean": batch.mean, "servers": servers},
        )

    width = max(1, batch.tail_length(tail_tol * 1e-3))
    tail = batch.tail(width)
    reversed_tail = tail[::-1]
    offered = lam / (servers * mu)
    theta = _decay_rate(offered, tail)
    log_theta = math.log(theta)

    cap = int(numerics.finite_n_max_states)
    pi = np.zeros(min(cap, max(4 * (servers + width), 1024)))
    pi[0] = 1.0
    i = 0
    total = 1.0
    bound = math.inf
    while True:
        i += 1
        if i >= cap:
            logger.error(f"Finite-n recursion hit the {cap} state cap (tail bound {bound:.3g})")
            raise TruncationError(
                f"State cap {cap} reached before the tail bound fell below {tail_tol:g}",
                {"states": cap, "tail_bound": bound, "servers": servers},
            )
        if i >= len(pi):
            pi = np.concatenate([pi, np.zeros(min(len(pi), cap - len(pi)))])
        lo = max(0, i - width)
        window = pi[lo:i]
        pi[i] = lam / (mu * min(i, servers)) * float(np.dot(reversed_tail[width - (i - lo) :], window))
        total += pi[i]
        if pi[i] > 1e250:
            pi[: i + 1] /= pi[i]
            total = float(np.sum(pi[: i + 1]))
        if i >= servers + width:
            with np.errstate(divide="ignore"):
                recent = np.log(pi[i - width + 1 : i + 1])
            # pi_k <= K theta^k on the last window propagates to every later level
            log_scale = float(np.max(recent - np.arange(i - width + 1, i + 1) * log_theta))
            bound = math.exp(log_scale + (i + 1) * log_theta) / (1.0 - theta) / total
            if bound < tail_tol:
                break

    probabilities = pi[: i + 1] / total
    logger.info(
        f"Finite-n steady state: {i + 1} states, cn={servers}, tail bound {bound:.2g}, "
        f"P(Q >= cn) = {float(np.sum(probabilities[servers:])):.6g}"
    )
    return SteadyStateDistribution(
        probabilities=probabilities,
        truncation_index=i,
        tail_mass_bound=bound,
        n=n,
        servers=servers,
        batch_tail=batch.tail(servers + 1),
    )

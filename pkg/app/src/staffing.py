"""
Staffing: the smallest operator-to-batch-size ratio meeting an exceedance target.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from scipy.stats import norm

from .app_settings import NumericSettings, resolve_numerics
from .errors import NonMonotoneError, ParameterDomainError, SolverError
from .legendre import LegendreEstimate
from .marks import MarkDistribution, ServiceDistribution
from .stationary import Criterion, MarkovSystem, exceedance_estimate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BracketEvaluation:
    """One exceedance evaluation made while searching for the ratio."""

    c: float
    exceedance: float
    spread: float
    phase: str


@dataclass(frozen=True)
class StaffingResult:
    """Solved ratio c with the evaluations that located it."""

    ratio: float
    criterion: Criterion
    achieved: float
    epsilon: float
    load: float
    evaluations: Tuple[BracketEvaluation, ...] = field(default_factory=tuple)
    n: Optional[int] = None
    staff: Optional[int] = None

    def with_batch_index(self, n: int) -> "StaffingResult":
        return StaffingResult(
            ratio=self.ratio,
            criterion=self.criterion,
            achieved=self.achieved,
            epsilon=self.epsilon,
            load=self.load,
            evaluations=self.evaluations,
            n=int(n),
            staff=staff_count(self.ratio, n),
        )

    def to_dict(self) -> Dict[str, object]:
        return {
            "ratio": self.ratio,
            "criterion": self.criterion.value,
            "achieved": self.achieved,
            "epsilon": self.epsilon,
            "load": self.load,
            "n": self.n,
            "staff": self.staff,
            "evaluations": [(e.c, e.exceedance, e.phase) for e in self.evaluations],
        }


def _check_epsilon(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not 0 < epsilon < 1:
        raise ParameterDomainError(f"Target exceedance epsilon must lie in (0, 1), got {epsilon}")
    return epsilon


class _RatioSearch:
    """Bracket-then-bisect search over c with monotonicity spot checks."""

    def __init__(
        self,
        arrival_rate: float,
        service_rate: float,
        mark: MarkDistribution,
        epsilon: float,
        criterion: Criterion,
        numerics: NumericSettings,
        orders: Optional[Sequence[int]],
    ):
        self.base = MarkovSystem(arrival_rate, service_rate, mark)
        self.epsilon = epsilon
        self.criterion = criterion
        self.numerics = numerics
        self.orders = orders
        self.evaluations: List[BracketEvaluation] = []

    def evaluate(self, c: float, phase: str) -> BracketEvaluation:
        estimate: LegendreEstimate = exceedance_estimate(self.base.at(c), self.criterion, self.numerics, self.orders)
        record = BracketEvaluation(c, estimate.value, estimate.spread, phase)
        self.evaluations.append(record)
        logger.debug(f"{phase}: c={c:.6f} {self.criterion.value}={estimate.value:.6g}")
        return record

    def check_monotone(self, lower: Optional[BracketEvaluation], mid: BracketEvaluation, upper: BracketEvaluation) -> None:
        pairs = [(mid, upper)] if lower is None else [(lower, mid), (mid, upper)]
        for left, right in pairs:
            slack = max(1e-6, 0.5 * (left.spread + right.spread))
            if right.exceedance > left.exceedance + slack:
                logger.error(
                    f"Exceedance increased from {left.exceedance:.6g} at c={left.c:.6f} "
                    f"to {right.exceedance:.6g} at c={right.c:.6f}"
                )
                raise NonMonotoneError(
                    "Exceedance is not decreasing in c over the search bracket",
                    {"evaluations": [(e.c, e.exceedance) for e in self.evaluations]},
                )

    def run(self) -> StaffingResult:
        load = self.base.load
        numerics = self.numerics
        lower: Optional[BracketEvaluation] = None
        lower_c = load
        upper = self.evaluate(load * (1.0 + numerics.bracket_margin), "bracket")
        doublings = 0
        while upper.exceedance > self.epsilon:
            doublings += 1
            if doublings > numerics.max_bracket_doublings:
                logger.error(f"No feasible ratio found after {doublings - 1} doublings")
                raise SolverError(
                    f"Could not bracket a ratio with {self.criterion.value} <= {self.epsilon:g}",
                    {"evaluations": [(e.c, e.exceedance) for e in self.evaluations]},
                )
            lower, lower_c = upper, upper.c
            upper = self.evaluate(2.0 * upper.c, "bracket")
            self.check_monotone(None, lower, upper)

        while upper.c - lower_c > numerics.solver_tol:
            mid = self.evaluate(0.5 * (lower_c + upper.c), "bisect")
            self.check_monotone(lower, mid, upper)
            if mid.exceedance <= self.epsilon:
                upper = mid
            else:
                lower, lower_c = mid, mid.c

        logger.info(
            f"Solved {self.criterion.value} ratio c={upper.c:.4f} (exceedance {upper.exceedance:.3g} "
            f"<= {self.epsilon:g}) in {len(self.evaluations)} evaluations"
        )
        return StaffingResult(
            ratio=upper.c,
            criterion=self.criterion,
            achieved=upper.exceedance,
            epsilon=self.epsilon,
            load=load,
            evaluations=tuple(self.evaluations),
        )


def solve_ratio(
    arrival_rate: float,
    service_rate: float,
    mark: MarkDistribution,
    epsilon: float,
    criterion: Criterion = Criterion.P0,
    numerics: Optional[NumericSettings] = None,
    n: Optional[int] = None,
    orders: Optional[Sequence[int]] = None,
) -> StaffingResult:
    """
    Minimal c with exceedance(criterion, c) <= epsilon.

    Starts from c0 = lambda E[M] / mu * (1 + delta), doubles until the target
    is met and then bisects to the configured tolerance. The returned ratio
    always satisfies the target; the previous bracket end does not.

    Args:
        arrival_rate: lambda, batches per unit time
        service_rate: mu, per job
        mark: Limiting batch-size law
        epsilon: Target exceedance probability in (0, 1)
        criterion: p0, p1 or blocking
        numerics: Solver tolerance, bracket margin and Legendre settings
        n: Batch index; when given the staff count ceil(cn) is filled in
        orders: Legendre orders override

    Raises:
        SolverError: Target cannot be bracketed
        NonMonotoneError: Exceedance increased with c during the search
        EstimationError: Exceedance could not be estimated at some c
    """
    epsilon = _check_epsilon(epsilon)
    search = _RatioSearch(
        arrival_rate, service_rate, mark, epsilon, Criterion(criterion), resolve_numerics(numerics), orders
    )
    result = search.run()
    return result.with_batch_index(n) if n is not None else result


def staff_count(c: float, n: int) -> int:
    """Number of operators ceil(c n) for batch index n."""
    if int(n) != n or n < 1:
        raise ParameterDomainError(f"Batch index n must be a positive integer, got {n}")
    if not c > 0:
        raise ParameterDomainError(f"Ratio c must be positive, got {c}")
    # Rounded first so that 2.5 * 100 style products do not pick up float dust
    return int(math.ceil(round(float(c) * int(n), 9)))


def normal_approx_ratio(
    arrival_rate: float,
    service: ServiceDistribution,
    mark: MarkDistribution,
    epsilon: float,
    numerics: Optional[NumericSettings] = None,
) -> float:
    """
    Square-root style ratio rho + z_eps sigma for the shot-noise limit.

    rho = lambda E[M] int G-bar and sigma^2 = lambda E[M^2] int G-bar^2.
    Advisory only; the solver never uses it.
    """
    epsilon = _check_epsilon(epsilon)
    if not arrival_rate > 0:
        raise ParameterDomainError(f"Arrival rate must be positive, got {arrival_rate}")
    mean = arrival_rate * mark.mean * service.mean
    std = math.sqrt(arrival_rate * mark.second_moment * service.integral_sf_squared(numerics))
    return mean + float(norm.isf(epsilon)) * std


def mmn_infinite_normal_staff(arrival_rate: float, service_rate: float, n: int, epsilon: float) -> float:
    """Normal staffing for size-n batches into infinitely many exponential servers."""
    epsilon = _check_epsilon(epsilon)
    for name, value in (("Arrival rate", arrival_rate), ("Service rate", service_rate), ("Batch size", n)):
        if not value > 0:
            raise ParameterDomainError(f"{name} must be positive, got {value}")
    mean = n * arrival_rate / service_rate
    variance = n * (n + 1) * arrival_rate / (2.0 * service_rate)
    return mean + float(norm.isf(epsilon)) * math.sqrt(variance)

"""Batch-size, limiting-mark and service-duration distributions with their transforms."""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import ClassVar, Optional, Tuple, Union

import numpy as np
from scipy import stats
from scipy.special import exp1, gammainc, gammaincc, lambertw, ndtr

from .app_settings import NumericSettings, resolve_numerics
from .errors import ParameterDomainError
from .quadrature import adaptive_quad

logger = logging.getLogger(__name__)

# Documented relative error of the Lambert-W log-normal Laplace approximation
LOGNORMAL_APPROX_REL_ERROR = 0.01

# Relative accuracy attributed to closed-form transform values
CLOSED_FORM_REL_ERROR = 4 * float(np.finfo(float).eps)

# Standard-normal range integrated for log-normal expectations
_Z_LIMIT = 12.0

ArrayLike = Union[float, np.ndarray]


def ein(z: ArrayLike) -> ArrayLike:
    """
    Entire exponential integral Ein(z) = integral_0^z (1 - e^-t)/t dt.

    Uses the alternating power series below 0.5 and gamma + ln z + E1(z) above.
    """
    arr = np.asarray(z, dtype=float)
    if np.any(arr < 0):
        raise ParameterDomainError(f"Ein is evaluated on nonnegative arguments only, got {z}")
    out = np.zeros_like(arr)
    small = (arr > 0) & (arr < 0.5)
    if np.any(small):
        zs = arr[small]
        term = zs.copy()
        total = np.zeros_like(zs)
        for k in range(1, 30):
            total += (-1) ** (k + 1) * term / k
            term = term * zs / (k + 1)
        out[small] = total
    large = arr >= 0.5
    if np.any(large):
        zl = arr[large]
        out[large] = np.euler_gamma + np.log(zl) + exp1(zl)
    if np.ndim(z) == 0:
        return float(out)
    return out


def _check_s(s: float) -> float:
    s = float(s)
    if not math.isfinite(s) or s < 0:
        raise ParameterDomainError(f"Transform argument must be finite and >= 0, got {s}")
    return s


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ParameterDomainError(f"{name} must be positive and finite, got {value}")
    return value


def _lognormal_location_scale(mean: float, variance: float) -> Tuple[float, float]:
    """Convert (mean, variance) of the variable to (mu, sigma) of its logarithm."""
    sigma2 = math.log1p(variance / (mean * mean))
    return math.log(mean) - 0.5 * sigma2, math.sqrt(sigma2)


# ---------------------------------------------------------------------------
# Limiting marks
# ---------------------------------------------------------------------------


class MarkDistribution(ABC):
    """Law of the limiting jump size M1."""

    kind: ClassVar[str] = "mark"

    @property
    @abstractmethod
    def mean(self) -> float:
        """E[M]."""

    @property
    @abstractmethod
    def second_moment(self) -> float:
        """E[M^2]."""

    @abstractmethod
    def mgf_neg(self, s: float, numerics: Optional[NumericSettings] = None) -> float:
        """E[exp(-sM)]."""

    @abstractmethod
    def mgf_neg_deriv(self, s: float, numerics: Optional[NumericSettings] = None) -> float:
        """E[M exp(-sM)]."""

    @abstractmethod
    def expected_min(self, c: float, numerics: Optional[NumericSettings] = None) -> float:
        """E[min(M, c)]."""

    @abstractmethod
    def cdf(self, x: ArrayLike) -> ArrayLike:
        """P(M <= x)."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: Union[int, Tuple[int, ...]]) -> np.ndarray:
        """Draw i.i.d. marks."""

    @abstractmethod
    def to_text(self) -> str:
        """Config-text form, inverse of parse_mark."""

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2

    def sf(self, x: ArrayLike) -> ArrayLike:
        """P(M > x)."""
        return 1.0 - self.cdf(x)

    def expected_ein(self, s: float, numerics: Optional[NumericSettings] = None) -> float:
        """
        E[Ein(sM)], equal to integral_0^1 (1 - E[exp(-sMu)])/u du.

        The default integrates the u-form with adaptive quadrature; marks with
        a closed form or a cheaper law-side integral override it.
        """
        s = _check_s(s)
        if s == 0:
            return 0.0
        mean = self.mean

        def integrand(u: float) -> float:
            if u <= 0:
                return s * mean
            return (1.0 - self.mgf_neg(s * u, numerics)) / u

        return adaptive_quad(integrand, 0.0, 1.0, numerics, label=f"u-form Ein transform of {self.to_text()}")

    def expected_ein_by_u_quadrature(self, s: float, numerics: Optional[NumericSettings] = None) -> float:
        """Generic u-substitution path, kept callable for cross-checks."""
        return MarkDistribution.expected_ein(self, s, numerics)

    def transform_rel_error(self, numerics: Optional[NumericSettings] = None) -> float:
        """Relative accuracy of mgf_neg and mgf_neg_deriv values."""
        return resolve_numerics(numerics).quad_rel_tol

    def ein_rel_error(self, numerics: Optional[NumericSettings] = None) -> float:
        """Relative accuracy of expected_ein values."""
        return resolve_numerics(numerics).quad_rel_tol


@dataclass(frozen=True)
class DeterministicMark(MarkDistribution):
    """Point mass at value."""

    value: float
    kind: ClassVar[str] = "det"

    def __post_init__(self):
        _positive("Deterministic mark value", self.value)

    @property
    def mean(self) -> float:
        return float(self.value)

    @property
    def second_moment(self) -> float:
        return float(self.value) ** 2

    def mgf_neg(self, s, numerics=None):
        return math.exp(-_check_s(s) * self.value)

    def mgf_neg_deriv(self, s, numerics=None):
        return self.value * math.exp(-_check_s(s) * self.value)

    def expected_min(self, c, numerics=None):
        return min(float(self.value), float(c))

    def expected_ein(self, s, numerics=None):
        return ein(_check_s(s) * self.value)

    def transform_rel_error(self, numerics=None):
        return CLOSED_FORM_REL_ERROR

    def ein_rel_error(self, numerics=None):
        return CLOSED_FORM_REL_ERROR

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.value, 1.0, 0.0)

    def sample(self, rng, size):
        return np.full(size, float(self.value))

    def to_text(self) -> str:
        return f"det:{self.value:g}"


@dataclass(frozen=True)
class ExponentialMark(MarkDistribution):
    """Exponential law with rate alpha."""

    rate: float
    kind: ClassVar[str] = "exp"

    def __post_init__(self):
        _positive("Exponential mark rate", self.rate)

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    @property
    def second_moment(self) -> float:
        return 2.0 / self.rate**2

    def mgf_neg(self, s, numerics=None):
        return self.rate / (self.rate + _check_s(s))

    def mgf_neg_deriv(self, s, numerics=None):
        return self.rate / (self.rate + _check_s(s)) ** 2

    def expected_min(self, c, numerics=None):
        return -math.expm1(-self.rate * c) / self.rate

    def expected_ein(self, s, numerics=None):
        return math.log1p(_check_s(s) / self.rate)

    def transform_rel_error(self, numerics=None):
        return CLOSED_FORM_REL_ERROR

    def ein_rel_error(self, numerics=None):
        return CLOSED_FORM_REL_ERROR

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return -np.expm1(-self.rate * x)

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def to_text(self) -> str:
        return f"exp:{self.rate:g}"


@dataclass(frozen=True)
class GammaMark(MarkDistribution):
    """Gamma law with shape and rate."""

    shape: float
    rate: float
    kind: ClassVar[str] = "gamma"

    def __post_init__(self):
        _positive("Gamma mark shape", self.shape)
        _positive("Gamma mark rate", self.rate)

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def second_moment(self) -> float:
        return self.shape * (self.shape + 1.0) / self.rate**2

    def mgf_neg(self, s, numerics=None):
        return (self.rate / (self.rate + _check_s(s))) ** self.shape

    def mgf_neg_deriv(self, s, numerics=None):
        s = _check_s(s)
        return self.shape / self.rate * (self.rate / (self.rate + s)) ** (self.shape + 1.0)

    def expected_min(self, c, numerics=None):
        z = self.rate * c
        return self.mean * gammainc(self.shape + 1.0, z) + c * gammaincc(self.shape, z)

    def transform_rel_error(self, numerics=None):
        return CLOSED_FORM_REL_ERROR

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return gammainc(self.shape, self.rate * x)

    def sample(self, rng, size):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def to_text(self) -> str:
        return f"gamma:{self.shape:g},{self.rate:g}"


@dataclass(frozen=True)
class LogNormalMark(MarkDistribution):
    """Log-normal law given by the mean and variance of the variable itself."""

    mean_value: float
    variance_value: float
    kind: ClassVar[str] = "lognormal"

    def __post_init__(self):
        _positive("Log-normal mean", self.mean_value)
        _positive("Log-normal variance", self.variance_value)

    @property
    def location_scale(self) -> Tuple[float, float]:
        return _lognormal_location_scale(self.mean_value, self.variance_value)

    @property
    def mean(self) -> float:
        return float(self.mean_value)

    @property
    def second_moment(self) -> float:
        return self.variance_value + self.mean_value**2

    def _law_expectation(self, g, s: float, numerics: Optional[NumericSettings], label: str) -> float:
        """integral of g(x) over the log-normal law, in the standard-normal variable."""
        mu, sigma = self.location_scale
        points = None
        if s > 0:
            pivot = (-math.log(s) - mu) / sigma
            if -_Z_LIMIT < pivot < _Z_LIMIT:
                points = [pivot]

        def integrand(z: float) -> float:
            return g(math.exp(mu + sigma * z)) * math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

        return adaptive_quad(integrand, -_Z_LIMIT, _Z_LIMIT, numerics, points=points, label=label)

    def mgf_neg(self, s, numerics=None):
        numerics = resolve_numerics(numerics)
        return lognormal_laplace(self, s, numerics.lognormal_method, numerics).value

    def transform_rel_error(self, numerics=None):
        numerics = resolve_numerics(numerics)
        if numerics.lognormal_method == "closed_approx":
            return LOGNORMAL_APPROX_REL_ERROR
        return numerics.quad_rel_tol

    def mgf_neg_deriv(self, s, numerics=None):
        s = _check_s(s)
        if s == 0:
            return self.mean
        return self._law_expectation(lambda x: x * math.exp(-s * x), s, numerics, f"E[M exp(-{s:g} M)]")

    def expected_ein(self, s, numerics=None):
        s = _check_s(s)
        if s == 0:
            return 0.0
        return self._law_expectation(lambda x: ein(s * x), s, numerics, f"E[Ein({s:g} M)]")

    def expected_min(self, c, numerics=None):
        mu, sigma = self.location_scale
        log_c = math.log(c)
        return self.mean * ndtr((log_c - mu - sigma**2) / sigma) + c * (1.0 - ndtr((log_c - mu) / sigma))

    def cdf(self, x):
        mu, sigma = self.location_scale
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x > 0, ndtr((np.log(np.maximum(x, 1e-300)) - mu) / sigma), 0.0)

    def sample(self, rng, size):
        mu, sigma = self.location_scale
        return rng.lognormal(mu, sigma, size)

    def to_text(self) -> str:
        return f"lognormal:{self.mean_value:g},{self.variance_value:g}"


@dataclass(frozen=True)
class LaplaceValue:
    """A log-normal Laplace transform value and the relative error reported with it."""

    value: float
    method: str
    rel_error: float


def lognormal_laplace(
    params: Union[LogNormalMark, Tuple[float, float]],
    s: float,
    method: str = "quadrature",
    numerics: Optional[NumericSettings] = None,
) -> LaplaceValue:
    """
    Laplace transform E[exp(-sM)] of a log-normal mark.

    Args:
        params: LogNormalMark or (mean, variance) of the variable
        s: Nonnegative argument
        method: "quadrature" (reference) or "closed_approx" (Lambert-W form)
        numerics: Quadrature tolerances

    Returns:
        LaplaceValue with the quadrature error estimate or the documented
        approximation bound
    """
    if not isinstance(params, LogNormalMark):
        params = LogNormalMark(*params)
    s = _check_s(s)
    if s == 0:
        return LaplaceValue(1.0, method, 0.0)

    if method == "closed_approx":
        mu, sigma = params.location_scale
        w = float(lambertw(s * sigma**2 * math.exp(mu)).real)
        value = math.exp(-(w * w + 2.0 * w) / (2.0 * sigma**2)) / math.sqrt(1.0 + w)
        return LaplaceValue(value, method, LOGNORMAL_APPROX_REL_ERROR)
    if method != "quadrature":
        raise ParameterDomainError(f"Unknown log-normal transform method: {method}")

    numerics = resolve_numerics(numerics)
    value = params._law_expectation(lambda x: math.exp(-s * x), s, numerics, f"E[exp(-{s:g} M)]")
    return LaplaceValue(value, method, numerics.quad_rel_tol)


def mgf_neg(dist: MarkDistribution, s: float, numerics: Optional[NumericSettings] = None) -> float:
    """E[exp(-sM)] for s >= 0."""
    return dist.mgf_neg(_check_s(s), numerics)


def mgf_neg_deriv(dist: MarkDistribution, s: float, numerics: Optional[NumericSettings] = None) -> float:
    """E[M exp(-sM)] for s >= 0."""
    return dist.mgf_neg_deriv(_check_s(s), numerics)


# ---------------------------------------------------------------------------
# Batch sizes
# ---------------------------------------------------------------------------


class BatchDistribution(ABC):
    """Law of B(n), the number of jobs in one batch at scale index n."""

    kind: ClassVar[str] = "batch"

    @property
    @abstractmethod
    def mean(self) -> float:
        """E[B(n)]."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw i.i.d. batch sizes as int64."""

    @abstractmethod
    def tail(self, j_max: int) -> np.ndarray:
        """Array of P(B >= j) for j = 1..j_max."""

    @abstractmethod
    def tail_length(self, tol: float) -> int:
        """Smallest L with P(B > L) < tol."""

    @abstractmethod
    def to_mark(self) -> MarkDistribution:
        """Weak limit of B(n)/n."""

    @abstractmethod
    def to_text(self) -> str:
        """Config-text form."""

    def _check_n(self):
        if int(self.n) != self.n or self.n < 1:
            raise ParameterDomainError(f"Batch index n must be a positive integer, got {self.n}")


@dataclass(frozen=True)
class DeterministicBatch(BatchDistribution):
    n: int
    kind: ClassVar[str] = "det"

    def __post_init__(self):
        self._check_n()

    @property
    def mean(self):
        return float(self.n)

    def sample(self, rng, size):
        return np.full(size, int(self.n), dtype=np.int64)

    def tail(self, j_max):
        return (np.arange(1, j_max + 1) <= self.n).astype(float)

    def tail_length(self, tol):
        return int(self.n)

    def to_mark(self):
        return DeterministicMark(1.0)

    def to_text(self):
        return "det"


@dataclass(frozen=True)
class PoissonBatch(BatchDistribution):
    n: int
    kind: ClassVar[str] = "poisson"

    def __post_init__(self):
        self._check_n()

    @property
    def mean(self):
        return float(self.n)

    def sample(self, rng, size):
        return rng.poisson(self.n, size).astype(np.int64)

    def tail(self, j_max):
        return stats.poisson.sf(np.arange(0, j_max), self.n)

    def tail_length(self, tol):
        return int(stats.poisson.isf(tol, self.n)) + 1

    def to_mark(self):
        return DeterministicMark(1.0)

    def to_text(self):
        return "poisson"


@dataclass(frozen=True)
class GeometricBatch(BatchDistribution):
    """Geometric on {1, 2, ...} with success probability alpha/n."""

    n: int
    alpha: float = 1.0
    kind: ClassVar[str] = "geo"

    def __post_init__(self):
        self._check_n()
        _positive("Geometric batch alpha", self.alpha)
        if self.alpha / self.n > 1:
            raise ParameterDomainError(f"Geometric success probability alpha/n must be <= 1, got {self.alpha / self.n}")

    @property
    def success_prob(self) -> float:
        return self.alpha / self.n

    @property
    def mean(self):
        return 1.0 / self.success_prob

    def sample(self, rng, size):
        return rng.geometric(self.success_prob, size).astype(np.int64)

    def tail(self, j_max):
        q = 1.0 - self.success_prob
        return q ** np.arange(0, j_max, dtype=float)

    def tail_length(self, tol):
        q = 1.0 - self.success_prob
        if q <= 0:
            return 1
        return int(math.ceil(math.log(tol) / math.log(q))) + 1

    def to_mark(self):
        return ExponentialMark(self.alpha)

    def to_text(self):
        return f"geo:{self.alpha:g}"


@dataclass(frozen=True)
class BinomialBatch(BatchDistribution):
    n: int
    p: float
    kind: ClassVar[str] = "binomial"

    def __post_init__(self):
        self._check_n()
        if not 0 < self.p <= 1:
            raise ParameterDomainError(f"Binomial batch probability must lie in (0, 1], got {self.p}")

    @property
    def mean(self):
        return self.n * self.p

    def sample(self, rng, size):
        return rng.binomial(self.n, self.p, size).astype(np.int64)

    def tail(self, j_max):
        return stats.binom.sf(np.arange(0, j_max), self.n, self.p)

    def tail_length(self, tol):
        return int(self.n)

    def to_mark(self):
        return DeterministicMark(float(self.p))

    def to_text(self):
        return f"binomial:{self.p:g}"


def batch_to_mark(batch: BatchDistribution) -> MarkDistribution:
    """Limiting mark law of B(n)/n."""
    return batch.to_mark()


# ---------------------------------------------------------------------------
# Service durations
# ---------------------------------------------------------------------------


class ServiceDistribution(ABC):
    """Service-duration law G with tail G-bar."""

    kind: ClassVar[str] = "service"
    is_exponential: ClassVar[bool] = False

    @property
    @abstractmethod
    def mean(self) -> float:
        """integral of G-bar."""

    @abstractmethod
    def cdf(self, x: ArrayLike) -> ArrayLike:
        """G(x)."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw i.i.d. durations."""

    @abstractmethod
    def integral_sf_squared(self, numerics: Optional[NumericSettings] = None) -> float:
        """integral_0^inf G-bar(x)^2 dx."""

    @abstractmethod
    def to_text(self) -> str:
        """Config-text form."""

    def sf(self, x: ArrayLike) -> ArrayLike:
        """G-bar(x) = 1 - G(x)."""
        return 1.0 - self.cdf(x)


@dataclass(frozen=True)
class ExponentialService(ServiceDistribution):
    rate: float
    kind: ClassVar[str] = "exp"
    is_exponential: ClassVar[bool] = True

    def __post_init__(self):
        _positive("Exponential service rate", self.rate)

    @property
    def mean(self):
        return 1.0 / self.rate

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return -np.expm1(-self.rate * x)

    def sf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return np.exp(-self.rate * x)

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def integral_sf_squared(self, numerics=None):
        return 0.5 / self.rate

    def to_text(self):
        return f"exp:{self.rate:g}"


@dataclass(frozen=True)
class DeterministicService(ServiceDistribution):
    duration: float
    kind: ClassVar[str] = "det"

    def __post_init__(self):
        _positive("Deterministic service duration", self.duration)

    @property
    def mean(self):
        return float(self.duration)

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.duration, 1.0, 0.0)

    def sample(self, rng, size):
        return np.full(size, float(self.duration))

    def integral_sf_squared(self, numerics=None):
        return float(self.duration)

    def to_text(self):
        return f"det:{self.duration:g}"


@dataclass(frozen=True)
class LogNormalService(ServiceDistribution):
    mean_value: float
    variance_value: float
    kind: ClassVar[str] = "lognormal"

    def __post_init__(self):
        _positive("Log-normal service mean", self.mean_value)
        _positive("Log-normal service variance", self.variance_value)

    @property
    def mean(self):
        return float(self.mean_value)

    def cdf(self, x):
        mu, sigma = _lognormal_location_scale(self.mean_value, self.variance_value)
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, ndtr((np.log(np.maximum(x, 1e-300)) - mu) / sigma), 0.0)

    def sample(self, rng, size):
        mu, sigma = _lognormal_location_scale(self.mean_value, self.variance_value)
        return rng.lognormal(mu, sigma, size)

    def integral_sf_squared(self, numerics=None):
        mu, sigma = _lognormal_location_scale(self.mean_value, self.variance_value)

        # x = exp(mu + sigma z), dx = sigma x dz
        def integrand(z: float) -> float:
            tail = 1.0 - ndtr(z)
            return tail * tail * sigma * math.exp(mu + sigma * z)

        return adaptive_quad(integrand, -_Z_LIMIT, _Z_LIMIT, numerics, label="integral of squared service tail")

    def to_text(self):
        return f"lognormal:{self.mean_value:g},{self.variance_value:g}"


# ---------------------------------------------------------------------------
# Config text
# ---------------------------------------------------------------------------


def _split_spec(text: str) -> Tuple[str, list]:
    head, _, tail = text.strip().partition(":")
    head = head.strip().lower()
    try:
        args = [float(part) for part in tail.split(",") if part.strip()]
    except ValueError as e:
        raise ParameterDomainError(f"Non-numeric distribution parameter in {text!r}") from e
    return head, args


def _expect(text: str, args: list, count: int) -> list:
    if len(args) != count:
        raise ParameterDomainError(f"{text!r} needs {count} parameter(s), got {len(args)}")
    return args


def parse_mark(text: str) -> MarkDistribution:
    """Parse det:m | exp:rate | gamma:shape,rate | lognormal:mean,var."""
    head, args = _split_spec(text)
    if head in ("det", "deterministic"):
        return DeterministicMark(*_expect(text, args, 1))
    if head in ("exp", "exponential"):
        return ExponentialMark(*_expect(text, args, 1))
    if head == "gamma":
        return GammaMark(*_expect(text, args, 2))
    if head in ("lognormal", "lognorm"):
        return LogNormalMark(*_expect(text, args, 2))
    raise ParameterDomainError(f"Unknown mark distribution: {text!r}")


def parse_batch(text: str, n: int) -> BatchDistribution:
    """Parse det | poisson | geo[:alpha] | binomial:p at scale index n."""
    head, args = _split_spec(text)
    n = int(n)
    if head in ("det", "deterministic"):
        _expect(text, args, 0)
        return DeterministicBatch(n)
    if head in ("poisson", "pois"):
        _expect(text, args, 0)
        return PoissonBatch(n)
    if head in ("geo", "geometric"):
        return GeometricBatch(n, args[0] if args else 1.0)
    if head in ("binomial", "binom"):
        return BinomialBatch(n, *_expect(text, args, 1))
    raise ParameterDomainError(f"Unknown batch distribution: {text!r}")


def parse_service(text: str) -> ServiceDistribution:
    """Parse exp:rate | det:duration | lognormal:mean,var."""
    head, args = _split_spec(text)
    if head in ("exp", "exponential"):
        return ExponentialService(*_expect(text, args, 1))
    if head in ("det", "deterministic"):
        return DeterministicService(*_expect(text, args, 1))
    if head in ("lognormal", "lognorm"):
        return LogNormalService(*_expect(text, args, 2))
    raise ParameterDomainError(f"Unknown service distribution: {text!r}")

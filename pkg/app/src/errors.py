"""Exception hierarchy shared by the numerics, the simulator and the CLI."""

from typing import Any, Dict, Optional


class StaffingError(Exception):
    """Base class for every failure this package raises on purpose."""

    exit_code = 1

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.diagnostics: Dict[str, Any] = diagnostics or {}

    def add_context(self, context: str) -> "StaffingError":
        """Prefix the message with the row, hour or fleet point that failed."""
        self.message = f"{context}: {self.message}"
        self.args = (self.message,)
        self.diagnostics.setdefault("context", context)
        return self


class ConfigError(StaffingError):
    """Malformed scenario/spec text."""

    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if key is not None:
            location.append(f"key '{key}'")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}", {"line": line, "key": key})
        self.detail = message
        self.line = line
        self.key = key


class ParameterDomainError(StaffingError, ValueError):
    """A distribution or model parameter lies outside its domain."""

    exit_code = 2


class UnsupportedConfigurationError(StaffingError):
    """A combination of options the implementation does not cover."""

    exit_code = 2


class StabilityError(StaffingError):
    """lambda * E[M] >= c * mu where a stable system is required."""

    exit_code = 3


class SolverError(StaffingError):
    """The staffing search could not produce a ratio."""

    exit_code = 3


class NonMonotoneError(SolverError):
    """Exceedance was observed to increase with c inside the search bracket."""


class NumericalError(StaffingError):
    """Base for numerical failures."""

    exit_code = 4


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance."""


class EstimationError(NumericalError):
    """Every Legendre candidate was filtered out."""


class TruncationError(NumericalError):
    """The finite-n recursion hit its state cap before the tail bound was met."""

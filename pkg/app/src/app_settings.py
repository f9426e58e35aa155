"""Persistent numeric settings storage."""

import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from .errors import ConfigError

logger = logging.getLogger(__name__)

# Settings restricted to a fixed set of words
SETTING_CHOICES: Dict[str, Tuple[str, ...]] = {
    "lognormal_method": ("quadrature", "closed_approx"),
    "zero_demand": ("zero", "skip", "error"),
}


@dataclass(frozen=True)
class NumericSettings:
    """Immutable bundle of numeric knobs consumed by the library functions."""

    legendre_orders: Tuple[int, ...] = tuple(range(5, 26))
    probability_slack: float = 0.05
    max_rounding_error: float = 1e-4
    convergence_gap: float = 2e-4
    quad_rel_tol: float = 1e-10
    quad_abs_tol: float = 1e-14
    quad_limit: int = 200
    solver_tol: float = 1e-3
    bracket_margin: float = 1e-3
    max_bracket_doublings: int = 60
    warmup_fraction: float = 0.2
    finite_n_max_states: int = 1_000_000
    replication_block: int = 256
    workers: int = 0
    lognormal_method: str = "quadrature"
    zero_demand: str = "zero"

    def __post_init__(self):
        for key in SETTING_CHOICES:
            _check_choice(key, getattr(self, key))

    def with_overrides(self, overrides: Dict[str, Any]) -> "NumericSettings":
        """
        Return a copy with string or typed overrides applied.

        Args:
            overrides: Mapping of field name -> value (strings are coerced)

        Returns:
            New NumericSettings

        Raises:
            ConfigError: Unknown field or uncoercible value
        """
        known = {f.name: f for f in fields(self)}
        coerced = {}
        for key, value in overrides.items():
            if key not in known:
                raise ConfigError(f"Unknown numeric setting: {key}", key=key)
            coerced[key] = _coerce(key, getattr(self, key), value)
        return replace(self, **coerced)


def _check_choice(key: str, value: Any) -> None:
    choices = SETTING_CHOICES.get(key)
    if choices is not None and value not in choices:
        raise ConfigError(f"Invalid value {value!r} for numeric setting, expected one of {', '.join(choices)}", key=key)


def _coerce(key: str, current: Any, value: Any) -> Any:
    """Coerce a raw override to the type of the current value."""
    if not isinstance(value, str):
        return tuple(value) if isinstance(current, tuple) else type(current)(value)
    try:
        if isinstance(current, tuple):
            text = value.strip()
            if ".." in text:
                lo, hi = text.split("..", 1)
                return tuple(range(int(lo), int(hi) + 1))
            return tuple(int(part) for part in text.split(",") if part.strip())
        if isinstance(current, bool):
            return value.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(current, int):
            return int(float(value))
        if isinstance(current, float):
            return float(value)
        value = value.strip()
        _check_choice(key, value)
        return value
    except ValueError as e:
        raise ConfigError(f"Invalid value {value!r} for numeric setting: {e}", key=key) from e


class AppSettings:
    """
    Manage persistent numeric settings using JSON storage.

    Settings are stored in $TELEOP_STAFFING_HOME/settings.json when that
    variable is set, otherwise in %APPDATA%/TeleopStaffing on Windows and
    ~/.teleop-staffing elsewhere.
    """

    def __init__(self, settings_dir: Optional[Path] = None):
        """
        Initialize app settings manager.

        Args:
            settings_dir: Optional explicit directory (overrides the environment)
        """
        if settings_dir is not None:
            self.settings_dir = Path(settings_dir)
        elif os.environ.get("TELEOP_STAFFING_HOME"):
            self.settings_dir = Path(os.environ["TELEOP_STAFFING_HOME"])
        elif os.environ.get("APPDATA"):
            self.settings_dir = Path(os.environ["APPDATA"]) / "TeleopStaffing"
        else:
            self.settings_dir = Path.home() / ".teleop-staffing"

        self.settings_file = self.settings_dir / "settings.json"
        self._settings: dict = {}
        self._load()

    def _load(self) -> None:
        """Load settings from JSON file."""
        try:
            if self.settings_file.exists():
                with open(self.settings_file, "r", encoding="utf-8") as f:
                    self._settings = json.load(f)
                logger.info(f"Loaded settings from {self.settings_file}")
            else:
                self._settings = {}
                logger.debug("No settings file found, using defaults")
        except json.JSONDecodeError as e:
            logger.error(f"Failed to parse settings file: {e}")
            self._settings = {}
        except OSError as e:
            logger.error(f"Failed to load settings: {e}")
            self._settings = {}

    def save(self) -> bool:
        """
        Save settings to JSON file.

        Returns:
            True if save was successful, False otherwise.
        """
        try:
            self.settings_dir.mkdir(parents=True, exist_ok=True)

            temp_file = self.settings_file.with_suffix(".tmp")
            with open(temp_file, "w", encoding="utf-8") as f:
                json.dump(self._settings, f, indent=2, sort_keys=True)

            temp_file.replace(self.settings_file)
            logger.info(f"Saved settings to {self.settings_file}")
            return True

        except OSError as e:
            logger.error(f"Failed to save settings: {e}")
            return False

    def get(self, key: str, default: Any = None) -> Any:
        """Get a setting value."""
        return self._settings.get(key, default)

    def set(self, key: str, value: Any, auto_save: bool = True) -> None:
        """
        Set a setting value.

        Args:
            key: Setting key
            value: Value to set
            auto_save: Whether to save immediately (default True)
        """
        self._settings[key] = value
        if auto_save:
            self.save()

    def delete(self, key: str, auto_save: bool = True) -> bool:
        """
        Delete a setting.

        Returns:
            True if key existed and was deleted, False otherwise
        """
        if key in self._settings:
            del self._settings[key]
            if auto_save:
                self.save()
            return True
        return False

    @property
    def numerics(self) -> NumericSettings:
        """Numeric settings with any stored overrides applied."""
        stored = self.get("numerics", {}) or {}
        try:
            return NumericSettings().with_overrides(stored)
        except ConfigError as e:
            logger.warning(f"Ignoring invalid stored numeric settings: {e.message}")
            return NumericSettings()

    @numerics.setter
    def numerics(self, value: NumericSettings) -> None:
        """Persist only the fields that differ from the defaults."""
        defaults = asdict(NumericSettings())
        diff = {
            key: list(v) if isinstance(v, tuple) else v
            for key, v in asdict(value).items()
            if defaults[key] != v
        }
        if diff:
            self.set("numerics", diff)
        else:
            self.delete("numerics")

    @property
    def default_seed(self) -> int:
        """Master seed used when a config does not name one."""
        return int(self.get("default_seed", 20190601))

    @default_seed.setter
    def default_seed(self, seed: int) -> None:
        self.set("default_seed", int(seed))


# Singleton instance for easy access
_app_settings: Optional[AppSettings] = None


def get_app_settings() -> AppSettings:
    """Get the singleton AppSettings instance."""
    global _app_settings
    if _app_settings is None:
        _app_settings = AppSettings()
    return _app_settings


def reset_app_settings() -> None:
    """Drop the cached singleton so the next access re-reads the environment."""
    global _app_settings
    _app_settings = None


def resolve_numerics(numerics: Optional[NumericSettings]) -> NumericSettings:
    """Return the explicit settings or the persisted defaults."""
    return numerics if numerics is not None else get_app_settings().numerics

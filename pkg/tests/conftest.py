"""Shared fixtures: isolated settings home and small numeric configurations."""

import pytest

from app.src.app_settings import NumericSettings, reset_app_settings
from app.src.marks import DeterministicMark, ExponentialMark
from app.src.stationary import MarkovSystem


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Point the settings singleton at an empty per-test directory."""
    monkeypatch.setenv("TELEOP_STAFFING_HOME", str(tmp_path / "settings"))
    reset_app_settings()
    yield
    reset_app_settings()


@pytest.fixture
def numerics() -> NumericSettings:
    return NumericSettings(workers=1)


@pytest.fixture
def fast_numerics() -> NumericSettings:
    """Fewer Legendre orders and a coarser solver for search-heavy tests."""
    return NumericSettings(legendre_orders=tuple(range(8, 19)), solver_tol=1e-3, workers=1)


@pytest.fixture
def exp_system() -> MarkovSystem:
    """lambda = 3, mu = 2, Exp(1) marks, c = 2: the exponential-mark reference system."""
    return MarkovSystem(3.0, 2.0, ExponentialMark(1.0), 2.0)


@pytest.fixture
def det_system() -> MarkovSystem:
    return MarkovSystem(3.0, 2.0, DeterministicMark(1.0), 2.0)

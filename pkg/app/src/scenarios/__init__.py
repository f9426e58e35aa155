"""Real-world staffing scenarios and the runs that reproduce the reported tables and curves."""

from .runner import (
    ScenarioRow,
    convergence_study,
    fleet_growth_curve,
    hourly_profile,
    run_table,
    table_frame,
)
from .scenario import (
    DATA_DIR,
    MilesMode,
    Scenario,
    SimulationInputs,
    SystemInputs,
    arrival_rate_from_miles,
    load_hourly_miles,
    load_metro_table,
    scenarios_from_config,
    simulation_from_config,
    system_from_config,
)

__all__ = [
    "DATA_DIR",
    "MilesMode",
    "Scenario",
    "ScenarioRow",
    "SimulationInputs",
    "SystemInputs",
    "arrival_rate_from_miles",
    "convergence_study",
    "fleet_growth_curve",
    "hourly_profile",
    "load_hourly_miles",
    "load_metro_table",
    "run_table",
    "scenarios_from_config",
    "simulation_from_config",
    "system_from_config",
    "table_frame",
]

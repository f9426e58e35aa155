#!/usr/bin/env python3
"""
Command-line entry point for teleop-staffing.

Every subcommand reads a config file (a bundled example when --config is
omitted), applies --set overrides, writes a delimited-text result with a
JSON manifest and prints the result to stdout.
"""

import argparse
import asyncio
import logging
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd

from app.src.app_settings import NumericSettings, get_app_settings
from app.src.config_manager import ConfigDocument, ConfigManager
from app.src.errors import ConfigError, StaffingError
from app.src.marks import ExponentialService
from app.src.result_store import ResultStore, frame_to_text, verify_result_file
from app.src.scenarios import (
    DATA_DIR,
    MilesMode,
    convergence_study,
    fleet_growth_curve,
    hourly_profile,
    run_table,
    scenarios_from_config,
    simulation_from_config,
    system_from_config,
    table_frame,
)
from app.src.simkit import (
    Discipline,
    dependence_study,
    grid_paths_frame,
    paths_frame,
    simulate_queue,
    simulate_storage,
    summary_frame,
)
from app.src.staffing import mmn_infinite_normal_staff, normal_approx_ratio, solve_ratio
from app.src.stationary import (
    Criterion,
    MarkovSystem,
    exceedance_estimate,
    exceedance_upper_bound,
    utilization,
)

logger = logging.getLogger("app")

DEFAULT_CONFIGS = {
    "table": "table.cfg",
    "curve": "fleet.cfg",
    "profile": "profile.cfg",
}
FALLBACK_CONFIG = "exponential.cfg"


@dataclass
class CommandOutput:
    """Main result frame, manifest inputs, seed and any side tables (suffix -> frame)."""

    frame: pd.DataFrame
    inputs: Dict[str, Any]
    seed: Optional[int] = None
    extras: Dict[str, pd.DataFrame] = field(default_factory=dict)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teleop-staffing",
        description="Staffing for batch-arrival teleoperation queues",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging and Legendre diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("-c", "--config", help="Config file (default: bundled example)")
        cmd.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
        cmd.add_argument("-o", "--output", help=f"Result file (default: {name}.csv)")
        cmd.add_argument("--workers", type=int, help="Worker threads (default: physical cores)")
        cmd.add_argument("--seed", type=int, help="Master seed for simulation commands")
        return cmd

    exceedance = add("exceedance", "Exceedance probabilities, upper bound and utilization at c")
    exceedance.add_argument("--order", type=int, action="append", help="Evaluate only these Legendre orders")
    staff = add("staff", "Solve the minimal ratio c for the target epsilon")
    staff.add_argument("--order", type=int, action="append", help="Evaluate only these Legendre orders")
    add("table", "Peak-hour metro staffing table")
    add("curve", "Staffing against fleet size")
    add("profile", "Hour-by-hour staffing ratios")
    add("simulate", "Simulate a batch queue or storage process")
    add("converge", "KS distance between scaled queues and their storage limit")
    add("depend", "Queue paths under within-batch service dependence")

    verify = sub.add_parser("verify", help="Re-check a result file against its manifest")
    verify.add_argument("path", help="Result file written by another subcommand")
    return parser


def _require_c(document: ConfigDocument) -> float:
    system = system_from_config(document)
    if not system.thresholds:
        raise ConfigError("This command needs system.c or system.c_list", key="c")
    return system.thresholds[0]


def _cmd_exceedance(args, document: ConfigDocument, numerics: NumericSettings) -> CommandOutput:
    system = system_from_config(document)
    if not system.thresholds:
        raise ConfigError("exceedance needs system.c or system.c_list", key="c")
    records = []
    for c in system.thresholds:
        sys_c = MarkovSystem(system.arrival_rate, system.service_rate, system.mark, c)
        record: Dict[str, Any] = {"c": c}
        for criterion in Criterion:
            estimate = exceedance_estimate(sys_c, criterion, numerics, args.order)
            record[criterion.value] = estimate.value
            record[f"{criterion.value}_spread"] = estimate.spread
            if args.verbose:
                print(f"c={c:g} {estimate.describe()}", file=sys.stderr)
        record["upper_bound"] = exceedance_upper_bound(sys_c, numerics)
        record["utilization"] = utilization(sys_c)
        records.append(record)
    inputs = {"lambda": system.arrival_rate, "mu": system.service_rate, "mark": system.mark.to_text()}
    return CommandOutput(pd.DataFrame.from_records(records), inputs)


def _cmd_staff(args, document: ConfigDocument, numerics: NumericSettings) -> CommandOutput:
    system = system_from_config(document)
    result = solve_ratio(
        system.arrival_rate,
        system.service_rate,
        system.mark,
        system.epsilon,
        system.criterion,
        numerics,
        orders=args.order,
    )
    if args.verbose:
        for evaluation in result.evaluations:
            print(f"{evaluation.phase:8s} c={evaluation.c:.6f} exceedance={evaluation.exceedance:.6g}", file=sys.stderr)
    service = system.service or ExponentialService(system.service_rate)
    record: Dict[str, Any] = {
        "criterion": result.criterion.value,
        "epsilon": result.epsilon,
        "c": result.ratio,
        "achieved": result.achieved,
        "load": result.load,
        "evaluations": len(result.evaluations),
        "normal_approx_c": normal_approx_ratio(system.arrival_rate, service, system.mark, system.epsilon, numerics),
    }
    for n in system.n_list:
        record[f"staff_n{n}"] = result.with_batch_index(n).staff
        record[f"mmn_normal_n{n}"] = mmn_infinite_normal_staff(system.arrival_rate, system.service_rate, n, system.epsilon)
    inputs = {"lambda": system.arrival_rate, "mu": system.service_rate, "mark": system.mark.to_text()}
    return CommandOutput(pd.DataFrame([record]), inputs)


def _scenarios_of(document: ConfigDocument, modes: Tuple[MilesMode, ...]):
    scenarios = [s for s in scenarios_from_config(document) if s.mode in modes]
    if not scenarios:
        raise ConfigError(f"No scenario with {'/'.join(m.value for m in modes)} demand in the config")
    return scenarios


def _cmd_table(args, document: ConfigDocument, numerics: NumericSettings) -> CommandOutput:
    scenarios = _scenarios_of(document, (MilesMode.ANNUAL, MilesMode.RATE))
    rows = run_table(scenarios, numerics, args.workers)
    return CommandOutput(table_frame(rows), {"scenarios": [s.name for s in scenarios]})


def _cmd_curve(args, document: ConfigDocument, numerics: NumericSettings) -> CommandOutput:
    frames = []
    scenarios = _scenarios_of(document, (MilesMode.FLEET,))
    for scenario in scenarios:
        frame = fleet_growth_curve(scenario, numerics=numerics, workers=args.workers)
        frame.insert(0, "label", scenario.label)
        frames.append(frame)
    return CommandOutput(pd.concat(frames, ignore_index=True), {"scenarios": [s.name for s in scenarios]})


def _cmd_profile(args, document: ConfigDocument, numerics: NumericSettings) -> CommandOutput:
    frames = []
    scenarios = _scenarios_of(document, (MilesMode.HOURLY,))
    for scenario in scenarios:
        frame = hourly_profile(scenario, numerics, args.workers)
        frame.insert(0, "label", scenario.label)
        frames.append(frame)
    return CommandOutput(pd.concat(frames, ignore_index=True), {"scenarios": [s.name for s in scenarios]})


def _seed(args, configured: Optional[int]) -> int:
    if args.seed is not None:
        return args.seed
    if configured is not None:
        return configured
    return get_app_settings().default_seed


def _cmd_simulate(args, document: ConfigDocument, numerics: NumericSettings) -> CommandOutput:
    system = system_from_config(document)
    sim = simulation_from_config(document)
    seed = _seed(args, sim.seed)
    grid = sim.grid()
    if sim.model == "queue":
        spec = sim.queue_spec(system)
        result = simulate_queue(
            spec,
            sim.horizon_hours,
            sim.reps,
            seed,
            grid,
            sim.record_paths,
            sim.track_busy,
            numerics=numerics,
            workers=args.workers,
        )
    else:
        spec = sim.storage_spec(system)
        result = simulate_storage(spec, sim.horizon_hours, sim.reps, seed, grid, sim.record_paths, numerics, args.workers)

    extras: Dict[str, pd.DataFrame] = {}
    if grid is not None:
        extras["paths"] = grid_paths_frame(result)
    if sim.record_paths:
        extras["events"] = paths_frame(result.path_records)
    return CommandOutput(summary_frame(result, system.thresholds or None), dict(result.spec), seed, extras)


def _cmd_converge(args, document: ConfigDocument, numerics: NumericSettings) -> CommandOutput:
    system = system_from_config(document)
    sim = simulation_from_config(document)
    seed = _seed(args, sim.seed)
    frame = convergence_study(
        system.arrival_rate,
        system.service_rate,
        _require_c(document),
        batch=sim.batch,
        n_list=sim.n_list,
        horizon=sim.horizon_hours,
        reps=sim.reps,
        seed=seed,
        discipline=Discipline(sim.discipline),
        numerics=numerics,
        workers=args.workers,
    )
    inputs = {"lambda": system.arrival_rate, "mu": system.service_rate, "batch": sim.batch, "discipline": sim.discipline}
    return CommandOutput(frame, inputs, seed)


def _cmd_depend(args, document: ConfigDocument, numerics: NumericSettings) -> CommandOutput:
    system = system_from_config(document)
    sim = simulation_from_config(document)
    seed = _seed(args, sim.seed)
    frame = dependence_study(
        n=sim.n,
        c=_require_c(document),
        arrival_rate=system.arrival_rate,
        horizon=sim.horizon_hours,
        rhos=sim.rho_list,
        seed=seed,
        grid_points=sim.grid_points or 201,
        numerics=numerics,
    )
    return CommandOutput(frame, {"n": sim.n, "lambda": system.arrival_rate, "rhos": list(sim.rho_list)}, seed)


COMMANDS = {
    "exceedance": _cmd_exceedance,
    "staff": _cmd_staff,
    "table": _cmd_table,
    "curve": _cmd_curve,
    "profile": _cmd_profile,
    "simulate": _cmd_simulate,
    "converge": _cmd_converge,
    "depend": _cmd_depend,
}


async def run_command(args: argparse.Namespace) -> int:
    """
    Execute one parsed command.

    Returns:
        Process exit code
    """
    if args.command == "verify":
        outcome = await verify_result_file(args.path)
        print(outcome["message"])
        return 0 if outcome["success"] else 4

    config = args.config or str(DATA_DIR / DEFAULT_CONFIGS.get(args.command, FALLBACK_CONFIG))
    manager = ConfigManager(config)
    document = ConfigManager.apply_overrides(await manager.load(), args.overrides)
    numerics = document.numerics(get_app_settings().numerics)

    loop = asyncio.get_running_loop()
    output: CommandOutput = await loop.run_in_executor(None, COMMANDS[args.command], args, document, numerics)

    store = ResultStore()
    target = Path(args.output or f"{args.command}.csv")
    outcome = await store.write_result(output.frame, str(target), args.command, output.inputs, numerics, output.seed)
    for suffix, extra in output.extras.items():
        side = await store.write_result(
            extra, str(target.with_name(f"{target.stem}_{suffix}.csv")), args.command, output.inputs, numerics, output.seed
        )
        if not side["success"]:
            logger.error(side["message"])
    print(frame_to_text(output.frame), end="")
    if not outcome["success"]:
        logger.error(outcome["message"])
        return 1
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, configure logging and run the command."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return asyncio.run(run_command(args))
    except StaffingError as e:
        logger.error(e.message)
        for key, value in e.diagnostics.items():
            logger.debug(f"  {key}: {value}")
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        print("\n" + "=" * 80, file=sys.stderr)
        print(f"FATAL ERROR: {e}", file=sys.stderr)
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""
Oligodyn CLI: solve, sweep and simulate dynamic duopoly pricing models.

Usage:
    python -m src.cli.oligodyn solve-lbd --m 1 --costs 1,0.5 --delta 0.9 --out eq.csv
    python -m src.cli.oligodyn sweep-switching --delta 0.9 --out-dir runs/switching
    python -m src.cli.oligodyn simulate --config configs/simulate_lbd.cfg

Exit codes: 0 success, 2 invalid parameters, 3 convergence failure,
4 bracketing failure, 5 I/O error. Every failure prints one `error: ...` line
to stderr.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from src import __version__
from src.core.errors import OligodynError, OutputError, ParameterError
from src.core.settings import SolverSettings
from src.core.shock_dist import from_name, validate
from src.simulation.market_sim import SimConfig, SimModel, dominance_statistics, simulate
from src.solvers.lbd_model import (
    CSV_COLUMNS,
    bellman_residuals,
    dominance_report,
    hypercomp_sweep,
    solve_backward,
    solve_two_step,
    value_iteration_oracle,
)
from src.solvers.params import LbdParams, PredationParams, SwitchingParams
from src.solvers.predation_model import predation_limit
from src.solvers.switching_model import average_price, solve_switching, sweep_s

from .config import (
    Option,
    RunConfig,
    ensure_directory,
    parse_bool,
    parse_float,
    parse_floats,
    parse_int,
    parse_pair,
    parse_str,
    render,
    resolve,
    write_config_file,
)
from .emit import emit, meta_block, report_json

ORACLE_GAP_WARNING = 1e-6
DEFAULT_C1_GRID = tuple(round(0.1 * k, 10) for k in range(1, 10))

Artifact = Tuple[str, str, Any]


def setup_logging(verbose: bool) -> logging.Logger:
    """
    Configure logging for the CLI.

    Args:
        verbose: If True, use DEBUG level; else INFO

    Returns:
        Configured logger instance
    """
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        format='%(asctime)s - %(levelname)s - %(message)s',
        level=level,
        stream=sys.stderr,
        force=True
    )
    return logging.getLogger(__name__)


class OligodynArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises ParameterError instead of exiting."""

    def error(self, message: str):
        raise ParameterError(f"invalid arguments: {message}")


# ===== Option tables =====

OUTPUT_OPTIONS = [
    Option("out", parse_str, help="Primary artifact path (companions are written beside it)"),
    Option("out_dir", parse_str, help="Directory for all artifacts and run.cfg"),
]
SOLVER_OPTIONS = [
    Option("tol", parse_float, 1e-10, "Residual tolerance per root solve"),
    Option("max_bracket", parse_float, 1e3, "Largest |x| the bracket may expand to"),
]
DIST_OPTION = Option("dist", parse_str, "normal", "Shock law: normal, logistic or a CSV table path")
LBD_OPTIONS = [
    Option("m", parse_int, None, "Experience cap"),
    Option("costs", parse_floats, None, "Unit costs c(0..m), comma separated"),
    Option("delta", parse_float, None, "Discount factor in [0, 1)"),
    DIST_OPTION,
]

COMMANDS: Dict[str, Tuple[str, List[Option]]] = {
    "solve-lbd": ("Solve the learning-by-doing equilibrium", LBD_OPTIONS + [
        Option("method", parse_str, "backward", "Solver", choices=("backward", "two-step", "oracle")),
        Option("oracle_tol", parse_float, 1e-8, "Value-iteration sup-norm tolerance"),
        Option("oracle_max_iter", parse_int, 100_000, "Value-iteration pass cap"),
    ] + SOLVER_OPTIONS),
    "solve-switching": ("Solve the switching-cost equilibrium", [
        Option("s", parse_float, None, "Switching cost"),
        Option("delta", parse_float, None, "Discount factor in [0, 1)"),
        DIST_OPTION,
    ] + SOLVER_OPTIONS),
    "sweep-switching": ("Average-price sweep over switching costs", [
        Option("delta", parse_float, None, "Discount factor in [0, 1)"),
        DIST_OPTION,
        Option("s_grid", parse_floats, None, "Explicit s grid (overrides s_max/s_step)"),
        Option("s_max", parse_float, 10.0, "Largest s of the default grid"),
        Option("s_step", parse_float, 0.25, "Spacing of the default grid"),
    ] + SOLVER_OPTIONS),
    "sweep-hypercomp": ("Two-step values across experienced costs c(1)", [
        Option("c0", parse_float, 1.0, "Inexperienced cost c(0)"),
        Option("c1_grid", parse_floats, DEFAULT_C1_GRID, "Increasing c(1) values, each <= c(0)"),
        Option("delta", parse_float, None, "Discount factor in [0, 1)"),
        DIST_OPTION,
    ] + SOLVER_OPTIONS),
    "predation": ("Exit-game limit and predation comparison", [
        Option("costs", parse_floats, None, "Unit costs c(0),c(1)"),
        Option("delta", parse_float, None, "Discount factor in [0, 1)"),
        DIST_OPTION,
        Option("v_mono", parse_float, None, "Monopoly value of the survivor"),
        Option("v_mono_factor", parse_float, None, "Monopoly value as a multiple of v(1,1)"),
        Option("A", parse_float, 0.0, "Avoidable fixed cost (echoed)"),
        Option("alpha", parse_float, None, "Probability of a zero fixed cost (echoed)"),
    ] + SOLVER_OPTIONS),
    "simulate": ("Monte Carlo simulation under a solved policy", [
        Option("model", parse_str, "lbd", "Model to simulate", choices=("lbd", "switching")),
        Option("m", parse_int, None, "Experience cap (lbd)"),
        Option("costs", parse_floats, None, "Unit costs c(0..m) (lbd)"),
        Option("delta", parse_float, None, "Discount factor in [0, 1)"),
        DIST_OPTION,
        Option("s", parse_float, None, "Switching cost (switching)"),
        Option("periods", parse_int, 100, "Periods per replication"),
        Option("replications", parse_int, 10_000, "Replications"),
        Option("seed", parse_int, 0, "Seed of the per-replication streams"),
        Option("initial_state", parse_pair, None, "Starting state i,j (lbd)"),
        Option("chunk_size", parse_int, 4096, "Replications advanced together"),
        Option("trajectories", parse_bool, False, "Write per-period trajectories", flag=True),
        Option("sample_shocks", parse_bool, False, "Draw preference shocks explicitly", flag=True),
    ] + SOLVER_OPTIONS),
    "validate-dist": ("Check the shock-distribution assumptions", [DIST_OPTION]),
}


def build_parser() -> OligodynArgumentParser:
    parser = OligodynArgumentParser(
        prog="oligodyn",
        allow_abbrev=False,
        description="Markov-perfect equilibria of dynamic duopoly pricing models",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Two-step learning model, equilibrium table to CSV
  python -m src.cli.oligodyn solve-lbd --m 1 --costs 1,0.5 --delta 0.9 --out eq.csv

  # Proposition sweep with a config file, overriding one value
  python -m src.cli.oligodyn sweep-switching --config configs/sweep_switching.cfg --delta 0.5

  # Reproduce a run from its recorded config
  python -m src.cli.oligodyn simulate --config runs/sim/run.cfg --out-dir runs/sim2
        """
    )
    parser.add_argument('--version', action='version', version=f"oligodyn {__version__}")
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND', required=True)

    for name, (description, options) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=description, description=description, allow_abbrev=False)
        sub.add_argument('--config', type=Path, default=argparse.SUPPRESS, help='Flat key = value config file')
        sub.add_argument('--verbose', '-v', action='store_true', default=argparse.SUPPRESS,
                         help='Enable verbose logging')
        for option in options + OUTPUT_OPTIONS:
            kwargs: Dict[str, Any] = {'dest': option.name, 'default': argparse.SUPPRESS, 'help': option.help}
            if option.flag:
                kwargs['action'] = 'store_true'
            else:
                kwargs['type'] = option.parse
                if option.choices:
                    kwargs['choices'] = option.choices
            if option.default is not None and not option.flag:
                kwargs["help"] = f"{option.help} (default: {render(option.default)})"
            sub.add_argument(option.cli, **kwargs)
    return parser


# ===== Helpers =====

def _require(config: RunConfig, *keys: str) -> None:
    missing = [key for key in keys if config.get(key) is None]
    if missing:
        raise ParameterError(
            f"{config.command} needs {', '.join('--' + k.replace('_', '-') for k in missing)}",
            details={'missing': missing}
        )


def _settings(config: RunConfig) -> SolverSettings:
    max_bracket = config.get("max_bracket", 1e3)
    try:
        return SolverSettings(
            tolerance=config.get("tol", 1e-10),
            max_bracket=max_bracket,
            initial_half_width=min(1.0, max_bracket),
            oracle_tolerance=config.get("oracle_tol", 1e-8),
            oracle_max_iter=config.get("oracle_max_iter", 100_000),
        )
    except ValidationError as e:
        raise ParameterError.from_pydantic_error(e) from e


def _lbd_params(config: RunConfig) -> LbdParams:
    _require(config, "m", "costs", "delta")
    return LbdParams.build(
        m=config.get("m"), costs=config.get("costs"), delta=config.get("delta"), dist=config.get("dist")
    )


def _switching_params(config: RunConfig) -> SwitchingParams:
    _require(config, "s", "delta")
    return SwitchingParams.build(s=config.get("s"), delta=config.get("delta"), dist=config.get("dist"))


def _companion(out: Path, filename: str, primary: bool) -> Path:
    if primary:
        return out
    name = Path(filename)
    return out.with_name(f"{out.stem}_{name.stem}{name.suffix}")


def _write_artifacts(
    config: RunConfig,
    artifacts: List[Artifact],
    meta: Dict[str, Any],
    logger: logging.Logger
) -> None:
    """First artifact is primary: it goes to --out; all go to --out-dir."""
    if config.out_dir is not None:
        ensure_directory(config.out_dir)
    for k, (filename, fmt, payload) in enumerate(artifacts):
        targets = []
        if config.out_dir is not None:
            targets.append(config.out_dir / filename)
        if config.out is not None:
            targets.append(_companion(config.out, filename, k == 0))
        for path in targets:
            emit(payload, fmt, path, meta if fmt == "json" else None)
    if config.out_dir is not None:
        write_config_file(config, config.out_dir / "run.cfg")
    if not artifacts or (config.out is None and config.out_dir is None):
        logger.debug("No output location given; report printed to stdout only")


# ===== Subcommands =====

def run_solve_lbd(config: RunConfig, settings: SolverSettings, logger: logging.Logger):
    params = _lbd_params(config)
    method = config.get("method")
    report: Dict[str, Any] = {"model": "lbd", "method": method}

    if method == "two-step":
        eq, two_step = solve_two_step(params, settings)
        report["two_step"] = two_step.to_dict()
    elif method == "oracle":
        eq = value_iteration_oracle(params, settings=settings)
        backward = solve_backward(params, settings)
        gap = float(max(np.max(np.abs(eq.P - backward.P)), np.max(np.abs(eq.v - backward.v))))
        report["oracle_gap"] = gap
        if gap > ORACLE_GAP_WARNING:
            logger.warning(f"Value iteration and backward induction differ by {gap:.3e}")
    else:
        eq = solve_backward(params, settings)

    report["equilibrium"] = eq.summary()
    report["bellman_max_residual"] = float(np.max(np.abs(bellman_residuals(eq))))
    report["dominance"] = dominance_report(eq).to_dict(orient="records")
    return report, [
        ("equilibrium.csv", "csv", eq.to_frame()[CSV_COLUMNS]),
        ("report.json", "json", report),
    ]


def run_solve_switching(config: RunConfig, settings: SolverSettings, logger: logging.Logger):
    params = _switching_params(config)
    eq = solve_switching(params, settings)
    report = {"model": "switching", "equilibrium": eq.to_dict(), "average_price": average_price(eq)}
    return report, [("switching.json", "json", report)]


def run_sweep_switching(config: RunConfig, settings: SolverSettings, logger: logging.Logger):
    _require(config, "delta")
    base = SwitchingParams.build(s=0.0, delta=config.get("delta"), dist=config.get("dist"))
    grid = config.get("s_grid")
    if grid is None:
        step, s_max = config.get("s_step"), config.get("s_max")
        if step <= 0 or s_max <= 0:
            raise ParameterError("s_step and s_max must be positive")
        grid = step * np.arange(int(round(s_max / step)) + 1)
    result = sweep_s(base, grid, settings)
    report = {"model": "switching", "summary": result.summary()}
    return report, [
        ("sweep.csv", "csv", result.table),
        ("sweep.json", "json", report),
    ]


def run_sweep_hypercomp(config: RunConfig, settings: SolverSettings, logger: logging.Logger):
    _require(config, "delta")
    c0, grid = config.get("c0"), config.get("c1_grid")
    base = LbdParams.build(m=1, costs=(c0, min(grid)), delta=config.get("delta"), dist=config.get("dist"))
    table = hypercomp_sweep(base, grid, settings)
    report = {
        "model": "lbd",
        "v00_increasing": bool(np.all(np.diff(table["v00"].to_numpy()) > 0)),
        "P10_increasing": bool(np.all(np.diff(table["P10"].to_numpy()) > 0)),
        "effects": table["effect"].tolist()[1:],
    }
    return report, [
        ("hypercomp.csv", "csv", table),
        ("hypercomp.json", "json", report),
    ]


def run_predation(config: RunConfig, settings: SolverSettings, logger: logging.Logger):
    _require(config, "costs", "delta")
    lbd = LbdParams.build(m=1, costs=config.get("costs"), delta=config.get("delta"), dist=config.get("dist"))
    v_mono, factor = config.get("v_mono"), config.get("v_mono_factor")
    if (v_mono is None) == (factor is None):
        raise ParameterError("predation needs exactly one of --v-mono and --v-mono-factor")
    if factor is not None:
        v_mono = factor * float(solve_backward(lbd, settings).v[1, 1])
    params = PredationParams.build(lbd=lbd, v_mono=v_mono, A=config.get("A"), alpha=config.get("alpha"))
    limit = predation_limit(params, settings)
    report = {"model": "predation", **limit.to_dict()}
    return report, [("predation.json", "json", report)]


def run_simulate(config: RunConfig, settings: SolverSettings, logger: logging.Logger):
    model = SimModel(config.get("model"))
    extra: Dict[str, Any] = {}
    if model == SimModel.LBD:
        params = _lbd_params(config)
        eq = solve_backward(params, settings)
        dist = params.dist
        extra["solved_q"] = eq.q.tolist()
    else:
        params = _switching_params(config)
        eq = solve_switching(params, settings)
        dist = params.dist
        extra["solved_q1"] = eq.q1

    sim_config = SimConfig.build(
        model=model,
        periods=config.get("periods"),
        replications=config.get("replications"),
        seed=config.get("seed"),
        initial_state=config.get("initial_state", (0, 0)),
        record_trajectories=config.get("trajectories"),
        sample_shocks=config.get("sample_shocks"),
        chunk_size=config.get("chunk_size"),
    )
    result = simulate(eq, sim_config, dist=dist)
    report = {"model": model.value, "simulation": result.to_dict(), **extra}
    if model == SimModel.LBD:
        report["dominance"] = dominance_statistics(result)
    artifacts: List[Artifact] = [("simulation.json", "json", report)]
    if result.trajectories is not None:
        artifacts.append(("trajectories.csv", "csv", result.trajectories))
    return report, artifacts


def run_validate_dist(config: RunConfig, settings: SolverSettings, logger: logging.Logger):
    d = from_name(config.get("dist"))
    violations = validate(d)
    report = {"dist": d.to_dict(), "valid": not violations, "violations": [v.to_dict() for v in violations]}
    for violation in violations:
        logger.warning(str(violation))
    return report, [("violations.json", "json", report)]


HANDLERS: Dict[str, Callable] = {
    "solve-lbd": run_solve_lbd,
    "solve-switching": run_solve_switching,
    "sweep-switching": run_sweep_switching,
    "sweep-hypercomp": run_sweep_hypercomp,
    "predation": run_predation,
    "simulate": run_simulate,
    "validate-dist": run_validate_dist,
}


def _fail(error: OligodynError, logger: Optional[logging.Logger] = None) -> int:
    if logger is not None:
        logger.error(str(error))
    print(f"error: {error.one_line()}", file=sys.stderr)
    return error.exit_code


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, dispatch one subcommand and return its exit code.

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])

    Returns:
        0 success, 2 invalid parameters, 3 convergence failure,
        4 bracketing failure, 5 I/O error
    """
    load_dotenv()
    parser = build_parser()
    try:
        args = vars(parser.parse_args(argv))
    except ParameterError as e:
        return _fail(e)
    except SystemExit as e:
        return int(e.code or 0)

    logger = setup_logging(bool(args.pop('verbose', False)))
    command = args.pop('command')
    config_path = args.pop('config', None)

    try:
        config = resolve(command, COMMANDS[command][1] + OUTPUT_OPTIONS, args, config_path)
        settings = _settings(config)
        logger.info(f"oligodyn {command}")
        logger.info("=" * 60)

        report, artifacts = HANDLERS[command](config, settings, logger)
        meta = meta_block(config, settings)
        _write_artifacts(config, artifacts, meta, logger)
        sys.stdout.write(report_json(report, meta))

        if command == "validate-dist" and report["violations"]:
            return _fail(ParameterError(
                f"distribution violates {len(report['violations'])} assumption(s)",
                details={'first': report['violations'][0]['check']}
            ))
        return 0

    except OligodynError as e:
        return _fail(e, logger)

    except OSError as e:
        return _fail(OutputError(f"I/O failure: {e}", path=getattr(e, 'filename', None)), logger)


def main():
    """Main CLI entry point."""
    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()

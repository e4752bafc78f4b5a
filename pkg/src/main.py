"""
Command-line front end for the coupled-system critical-point toolkit.

Usage:
  python src/main.py ground --config run.cfg           # U, V, c_i, c_i*, norm identities
  python src/main.py solve --config run.cfg --beta 0.05
  python src/main.py sweep --config run.cfg            # full β sweep, CSV + summary
  python src/main.py check-potential --config run.cfg  # hypotheses (V0), (V1)

Results go to stdout as `key: value` lines; logs go to stderr.

Exit codes:
  0  success
  1  solver failure (non-convergence, Newton divergence, bracketing)
  2  configuration error
  3  Newton converged to a semitrivial pair
  4  a potential hypothesis fails

The thread count of the numerical libraries is taken from CRITPOINT_THREADS
(environment, or a .env file found from the working directory upwards).
"""

import argparse
import logging
import os
import sys
from pathlib import Path

from dotenv import find_dotenv, load_dotenv
from rich.console import Console
from rich.logging import RichHandler

# Ensure project root is on path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.utils.errors import (  # noqa: E402
    EXIT_CONFIG_ERROR,
    EXIT_HYPOTHESIS_FAILED,
    EXIT_OK,
    ConfigError,
    CritPointError,
    SemitrivialCollapseError,
    exit_code_for,
)

THREAD_ENV = "CRITPOINT_THREADS"
THREAD_TARGETS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

console = Console(soft_wrap=True, highlight=False)
logger = logging.getLogger("critpoint")


def configure_threads() -> None:
    """Export CRITPOINT_THREADS to the BLAS/OpenMP variables; call before numpy loads."""
    load_dotenv(find_dotenv(usecwd=True))
    raw = os.environ.get(THREAD_ENV)
    if raw is None or raw.strip() == "":
        return
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigError(f"{THREAD_ENV} must be a positive integer, got {raw!r}")
    if threads < 1:
        raise ConfigError(f"{THREAD_ENV} must be a positive integer, got {raw!r}")
    for name in THREAD_TARGETS:
        os.environ[name] = str(threads)


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def emit(key: str, value) -> None:
    if isinstance(value, float):
        value = f"{value:.12g}"
    console.out(f"{key}: {value}", highlight=False)


# ─── Shared setup ────────────────────────────────────────────────────────────

def _reference(config):
    from src.solvers.coupled import ReferencePair
    from src.solvers.ground import solve_ground_state

    grid = config.grid()
    params = config.model_params()
    controls = config.descent_controls()
    first = solve_ground_state(params, 1, grid=grid, controls=controls)
    second = solve_ground_state(params, 2, grid=grid, controls=controls)
    return params, grid, ReferencePair(first, second)


def _emit_report(report, reference, params) -> None:
    from src.solvers.coupled import semitrivial_threshold

    emit("beta", float(report.beta))
    emit("I_beta", float(report.energy))
    emit("residual", float(report.residual_norm))
    emit("newton_iters", report.newton_iters)
    emit("dist_to_UV", float(report.dist_to_uv))
    emit("norm_u", float(report.norm_u))
    emit("norm_v", float(report.norm_v))
    emit("threshold", float(semitrivial_threshold(params.p, reference.c1, reference.c2)))
    emit("high_energy_margin", float(report.high_energy_margin(reference)))


# ─── Commands ────────────────────────────────────────────────────────────────

def cmd_ground(config) -> int:
    from src.core.functional import c_star, estimate_sbar_p
    from src.solvers.ground import bracket_ts
    from src.utils.records import write_snapshot
    from simulation.sweep import prepare_output_dir

    out = prepare_output_dir(config.output_dir)
    params, grid, reference = _reference(config)
    sbar = estimate_sbar_p(params, grid, controls=config.descent_controls())
    emit("sbar_p", float(sbar))
    for i, state in ((1, reference.first), (2, reference.second)):
        threshold = c_star(params, i, sbar)
        identity = 2.0 * params.p * state.level / (params.p - 2.0)
        bracket = bracket_ts(params, i, state)
        emit(f"c{i}", float(state.level))
        emit(f"c{i}_star", float(threshold))
        emit(f"gap_{i}", float(threshold - state.level))
        emit(f"strict_{i}", "yes" if state.level < threshold else "no")
        emit(f"norm_sq_{i}", float(state.norm_sq(params)))
        emit(f"norm_identity_{i}", float(identity))
        emit(f"nehari_gap_{i}", float(state.nehari_gap))
        emit(f"residual_{i}", float(state.residual_norm))
        emit(f"iterations_{i}", state.iterations)
        emit(f"t1_{i}", float(bracket.t1))
        emit(f"t2_{i}", float(bracket.t2))
    emit("snapshot_U", write_snapshot(out / "U.bin", reference.first.field.as_array()))
    emit("snapshot_V", write_snapshot(out / "V.bin", reference.second.field.as_array()))
    return EXIT_OK


def cmd_solve(config, beta: float) -> int:
    from src.solvers.coupled import newton_solve_at_beta

    if not beta >= 0:
        raise ConfigError(f"--beta must be >= 0, got {beta!r}")
    params, _, reference = _reference(config)
    at_beta = params.with_beta(beta)
    try:
        report = newton_solve_at_beta(at_beta, reference.pair, reference, config.newton_controls())
    except SemitrivialCollapseError as exc:
        if exc.report is not None:
            _emit_report(exc.report, reference, at_beta)
        emit("status", "semitrivial")
        raise
    _emit_report(report, reference, at_beta)
    emit("status", "converged")
    return EXIT_OK


def cmd_sweep(config) -> int:
    from simulation.sweep import run_experiment
    from src.utils.records import RunManifest

    result = run_experiment(RunManifest.from_config(config))
    emit("records", len(result.records))
    for name in ("csv", "summary", "manifest"):
        emit(name, result.artifacts[name])
    smallest = min(result.records, key=lambda r: r.beta)
    emit("smallest_beta", float(smallest.beta))
    emit("dist_to_UV", float(smallest.dist_to_UV))
    emit("I_beta", float(smallest.I_beta))
    emit("monotone", "yes" if result.monotone else "no")
    if result.probe is not None and result.probe.delta_estimate is not None:
        emit("delta_estimate", float(result.probe.delta_estimate))
    return EXIT_OK


def cmd_check_potential(config) -> int:
    from src.core.potential import check_v0, check_v1

    spec = config.potential_spec()
    grid = config.grid()
    v1 = check_v1(spec, grid)
    v0 = check_v0(spec, grid, config.resolved_sobolev_s())
    emit("V1", "holds" if v1.holds else "fails")
    emit("V1_max_violation", float(v1.max_violation))
    emit("V0", v0.verdict)
    if v0.applicable:
        emit("V0_integral", float(v0.integral))
    emit("V0_bound", float(v0.bound))
    if not v1.holds or v0.holds is False:
        return EXIT_HYPOTHESIS_FAILED
    return EXIT_OK


# ─── Entry point ─────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="critpoint",
        description="Critical points of the quadratically coupled Schrödinger system",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("ground", "ground states, levels and thresholds"),
        ("solve", "Newton solve at one β from (U, V)"),
        ("sweep", "continuation and minimax estimates over the β schedule"),
        ("check-potential", "check the potential hypotheses"),
    ):
        command = sub.add_parser(name, help=help_text)
        command.add_argument("--config", required=True, help="flat key = value run configuration")
        if name == "solve":
            command.add_argument("--beta", type=float, required=True, help="coupling strength β >= 0")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        configure_threads()
        from src.utils.config import load_config

        config = load_config(args.config)
        if args.command == "ground":
            return cmd_ground(config)
        if args.command == "solve":
            return cmd_solve(config, args.beta)
        if args.command == "sweep":
            return cmd_sweep(config)
        return cmd_check_potential(config)
    except CritPointError as exc:
        code = exit_code_for(exc)
        logger.error("%s", exc)
        if code == EXIT_CONFIG_ERROR:
            console.out(f"error: {exc}", highlight=False)
        return code
    except ValueError as exc:
        logger.error("%s", exc)
        console.out(f"error: {exc}", highlight=False)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())

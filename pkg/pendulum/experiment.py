#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Pendulum Control Experiments

Command line front end that runs a scenario file against the classical
feedback linearization controller, the adaptive fuzzy controller, or both
head to head, and writes the results into one output directory:
- trajectory.csv (trajectory_classical.csv / trajectory_adaptive.csv when comparing)
- metrics.txt with the scenario echo, tracking metrics and verdict lines
- tracking, tracking_error, control_effort and theta_norms plots as SVG
- theta_f.csv / theta_g.csv with the final fuzzy parameters of adaptive runs

Setup Instructions:
1. Run the setup script to create a virtual environment and install dependencies:
   ./setup.sh
2. Activate the virtual environment:
   source venv/bin/activate
3. Run an experiment: python -m pendulum.experiment run config/nominal.cfg

For more options, run: python -m pendulum.experiment --help
"""
import sys


# Check for required dependencies before importing them
def check_dependencies():
    """Check if all required dependencies are installed."""
    required_packages = {
        'numpy': 'numpy',
        'matplotlib': 'matplotlib',
        'pydantic': 'pydantic',
        'dotenv': 'python-dotenv'
    }

    missing_packages = []

    for module, package in required_packages.items():
        try:
            __import__(module)
        except ImportError:
            missing_packages.append(package)

    if missing_packages:
        print("Error: Missing required dependencies.")
        print("Please install the following packages:")
        for package in missing_packages:
            print(f"  - {package}")
        print("\nYou can install them by running:")
        print("  pip install -r requirements.txt")
        print("\nOr use the setup script to create a virtual environment:")
        print("  ./setup.sh")
        sys.exit(1)


check_dependencies()

import argparse
import asyncio
import logging
import os

from dotenv import load_dotenv

from shared.errors import PendulumError, SimulationDivergence
from shared.result_store import ResultStore
from pendulum.control import PRESETS
from pendulum.reporting import RunReport, emit_csv, emit_plots, emit_theta_csv, format_report
from pendulum.scenario_config import format_config, load_config
from pendulum.selftest import run_selftest
from pendulum.sim import compute_metrics, robustness_summary, run_simulation, trajectory_digest

# Load environment variables from .env file
load_dotenv()

DEFAULT_OUT_DIR = "results"
DEFAULT_LOG_DIR = "logs"
RECOVERY_TIME = 5.0
RECOVERED_LIMIT = 0.1

logger = logging.getLogger("pendulum-experiment")


def setup_logging(log_level=logging.INFO, log_dir=DEFAULT_LOG_DIR):
    """Configure logging with file and console handlers."""
    # Ensure log directory exists
    os.makedirs(log_dir, exist_ok=True)

    logging.basicConfig(
        level=log_level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(os.path.join(log_dir, "experiment.log"), encoding='utf-8'),
            logging.StreamHandler()
        ]
    )
    return logging.getLogger("pendulum-experiment")


# ============================================================================
# Running experiments
# ============================================================================

def scenario_variants(cfg):
    """One scenario per controller to simulate"""
    if not cfg.compare:
        return [cfg]
    return [
        cfg.model_copy(update={"controller": "classical"}),
        cfg.model_copy(update={"controller": "adaptive"}),
    ]


async def simulate_all(configs):
    """Run independent simulations concurrently; exceptions are returned, not raised"""
    tasks = [asyncio.to_thread(run_simulation, cfg) for cfg in configs]
    return await asyncio.gather(*tasks, return_exceptions=True)


def _first_change_time(cfg, traj):
    for change in cfg.schedule.change_times():
        if traj.t[0] < change < traj.t[-1]:
            return change
    return None


def build_verdicts(metrics, robustness):
    """Yes/no statements comparing the controllers and their recovery"""
    verdicts = []
    if "classical" in metrics and "adaptive" in metrics:
        better = metrics["adaptive"].rms_final < metrics["classical"].rms_final
        verdicts.append(f"adaptive final-window RMS < classical: {'yes' if better else 'no'}")

    for name, summary in robustness.items():
        degraded = summary.post_rms > 2.0 * summary.pre_rms
        verdicts.append(f"{name} post-change RMS > 2x pre-change RMS: {'yes' if degraded else 'no'}")
        if summary.recovered_max_abs is not None:
            recovered = summary.recovered_max_abs <= RECOVERED_LIMIT
            verdicts.append(
                f"{name} max |e| from t={summary.recovery_start:g} <= {RECOVERED_LIMIT:g}: "
                f"{'yes' if recovered else 'no'}"
            )
    return verdicts


def run_command(cfg, out_dir):
    """Run a scenario and write every result file.

    Args:
        cfg (ScenarioConfig): Scenario; compare=True runs both controllers
        out_dir (str): Output directory, created when missing

    Returns:
        RunReport: Metrics, verdicts and the paths that were written

    Raises:
        SimulationDivergence: after the partial results were written
        PendulumError: configuration and controller errors, before anything is written
    """
    store = ResultStore(out_dir)
    variants = scenario_variants(cfg)
    logger.info(f"Running {len(variants)} simulation(s) into {out_dir}")

    results = asyncio.run(simulate_all(variants))

    # Handle results sequentially; file writes happen after every run finished
    trajectories = []
    divergence = None
    for variant, result in zip(variants, results):
        if isinstance(result, SimulationDivergence):
            logger.error(f"Error simulating {variant.controller} controller: {str(result)}")
            divergence = divergence or result
            if result.trajectory is not None and len(result.trajectory) > 0:
                trajectories.append(result.trajectory)
            continue
        if isinstance(result, Exception):
            logger.error(f"Error simulating {variant.controller} controller: {str(result)}")
            raise result
        trajectories.append(result)

    report = RunReport(scenario=format_config(cfg))
    for traj in trajectories:
        name = traj.controller
        report.metrics[name] = compute_metrics(traj, threshold=cfg.settle_threshold)
        report.digests[name] = trajectory_digest(traj)
        report.warnings.extend(traj.warnings)

        change = _first_change_time(cfg, traj)
        if change is not None:
            report.robustness[name] = robustness_summary(traj, change, recovery=RECOVERY_TIME)

        csv_name = f"trajectory_{name}.csv" if cfg.compare else "trajectory.csv"
        store.record(emit_csv(traj, store.path_for(csv_name)))
        for key, rows in traj.theta_rows.items():
            store.record(emit_theta_csv(rows, store.path_for(f"{key}.csv")))

    report.verdicts = build_verdicts(report.metrics, report.robustness)
    if divergence is not None:
        report.diverged = str(divergence)

    if trajectories:
        for path in emit_plots(trajectories, out_dir):
            store.record(path)
    store.write_text("metrics.txt", format_report(report))
    report.paths = list(store.paths)

    for verdict in report.verdicts:
        logger.info(verdict)
    if divergence is not None:
        raise divergence
    return report


# ============================================================================
# Command line
# ============================================================================

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    common.add_argument("--log-dir", default=os.getenv("PENDULUM_LOG_DIR", DEFAULT_LOG_DIR),
                        help="Directory for experiment.log, env PENDULUM_LOG_DIR (default: %(default)s)")

    parser = argparse.ArgumentParser(
        description="Rotary inverted pendulum control experiments"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run a scenario file", parents=[common])
    run.add_argument("config", help="Path to the scenario file")
    run.add_argument("--out", "-o", default=os.getenv("PENDULUM_OUT_DIR", DEFAULT_OUT_DIR),
                     help="Output directory, env PENDULUM_OUT_DIR (default: %(default)s)")
    run.add_argument("--compare", action="store_true", help="Run classical and adaptive controllers head to head")
    run.add_argument("--preset", choices=sorted(PRESETS), default=None,
                     help="Adaptive controller preset, replaces the one in the file (default: the file's preset)")
    run.add_argument("--seed", type=int, default=None, help="Seed recorded with the scenario (default: the file's seed)")

    selftest = subparsers.add_parser("selftest", help="Run the invariant suite", parents=[common])
    selftest.add_argument("--seed", type=int, default=0, help="Seed of the random samples (default: %(default)s)")
    return parser


def main(argv=None):
    """Main entry point; returns the process exit status."""
    args = build_parser().parse_args(argv)

    logger = setup_logging(logging.DEBUG if args.verbose else logging.INFO, args.log_dir)

    try:
        if args.command == "selftest":
            results = run_selftest(seed=args.seed)
            for result in results:
                print(result.line())
            print(f"All {len(results)} selftest checks passed")
            return 0

        cfg = load_config(args.config, preset=args.preset)
        update = {}
        if args.compare:
            update["compare"] = True
        if args.seed is not None:
            update["seed"] = args.seed
        if update:
            cfg = cfg.model_copy(update=update)

        report = run_command(cfg, args.out)

        print("\n" + "=" * 60)
        print("EXPERIMENT SUMMARY")
        print("=" * 60)
        for name, metrics in report.metrics.items():
            print(f"{name}: final-window RMS {metrics.rms_final:.4g}, "
                  f"band [{metrics.band_min:.4g}, {metrics.band_max:.4g}]")
        for verdict in report.verdicts:
            print(verdict)
        for warning in report.warnings:
            print(f"warning: {warning}")
        print(f"Results written to {args.out}")
        print("=" * 60)
        return 0
    except PendulumError as e:
        logger.error(f"{type(e).__name__}: {str(e)}")
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error: {str(e)}")
        return 1


if __name__ == "__main__":
    sys.exit(main())

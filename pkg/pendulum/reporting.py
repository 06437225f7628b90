#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Result files of an experiment run.

- emit_csv / read_csv: trajectory table with a fixed 11-column contract
- emit_theta_csv: final fuzzy parameters, one row per rule
- emit_plots: tracking, tracking error, control effort and theta norms as SVG,
  overlaying every controller of a comparison run
- RunReport / format_report: scenario echo, metrics and verdicts for metrics.txt
"""

import logging
import os
from typing import Dict, List, Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from pydantic import BaseModel, Field

from shared.errors import OutputError
from pendulum.sim import Metrics, RobustnessSummary

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "x1", "x2", "x3", "x4", "u", "ym", "e", "theta_f_norm", "theta_g_norm", "clamp")
THETA_COLUMNS = ("rule", "x2", "x3", "x4", "value")
PLOT_NAMES = ("tracking", "tracking_error", "control_effort", "theta_norms")

_COLORS = {"classical": "tab:blue", "adaptive": "tab:red"}

plt.rcParams['svg.hashsalt'] = 'pendulum-experiments'


class RunReport(BaseModel):
    """Outcome of one run_command call"""
    scenario: str = Field(..., description="Scenario echo in scenario-file syntax")
    metrics: Dict[str, Metrics] = Field(default_factory=dict)
    robustness: Dict[str, RobustnessSummary] = Field(default_factory=dict)
    verdicts: List[str] = Field(default_factory=list)
    paths: List[str] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)
    digests: Dict[str, str] = Field(default_factory=dict, description="Trajectory digest per controller")
    diverged: Optional[str] = Field(None, description="Divergence message when a run aborted")


def trajectory_table(traj):
    """Trajectory as an (N, 11) array in CSV column order"""
    return np.column_stack((
        traj.t, traj.states, traj.u, traj.ym, traj.e,
        traj.theta_f_norm, traj.theta_g_norm, traj.clamp,
    ))


def _save_table(path, table, columns):
    try:
        np.savetxt(path, table, fmt='%.17g', delimiter=',', header=",".join(columns),
                   comments='', newline='\n')
    except OSError as e:
        logger.error(f"Error writing {path}: {str(e)}")
        raise OutputError(f"cannot write {path}: {str(e)}") from e
    return path


def emit_csv(traj, path):
    """Write the trajectory with 17 significant digits (exact round trip).

    Args:
        traj (Trajectory): Non-empty trajectory
        path (str): Output file

    Returns:
        str: path
    """
    if len(traj) == 0:
        raise ValueError("cannot write an empty trajectory")
    return _save_table(path, trajectory_table(traj), CSV_COLUMNS)


def read_csv(path):
    """Load a trajectory CSV written by emit_csv as an (N, 11) array"""
    with open(path, 'r', encoding='utf-8') as f:
        header = f.readline().strip()
    if header != ",".join(CSV_COLUMNS):
        raise ValueError(f"unexpected trajectory header in {path}: {header}")
    return np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)


def emit_theta_csv(rows, path):
    """Write (rule, x2, x3, x4, value) rows of a fuzzy parameter vector"""
    return _save_table(path, np.array(rows, dtype=float).reshape(-1, len(THETA_COLUMNS)), THETA_COLUMNS)


def _save_figure(fig, path):
    try:
        fig.savefig(path, format='svg', metadata={'Date': None})
    except OSError as e:
        logger.error(f"Error writing {path}: {str(e)}")
        raise OutputError(f"cannot write {path}: {str(e)}") from e
    finally:
        plt.close(fig)
    return path


def emit_plots(trajectories, out_dir):
    """Write the four SVG figures.

    Args:
        trajectories (list): One Trajectory, or one per controller in a comparison
        out_dir (str): Output directory

    Returns:
        list: Paths of tracking, tracking_error, control_effort and theta_norms
    """
    if not isinstance(trajectories, (list, tuple)):
        trajectories = [trajectories]

    paths = []
    for name in PLOT_NAMES:
        fig, ax = plt.subplots(figsize=(10, 5))

        if name == "tracking":
            first = trajectories[0]
            ax.plot(first.t, first.ym, 'k--', label='reference $y_m$', linewidth=1.2)
            for traj in trajectories:
                ax.plot(traj.t, traj.y, color=_COLORS.get(traj.controller), label=f'{traj.controller} $y$',
                        linewidth=1.5, alpha=0.8)
            ax.set_ylabel('Pendulum angle (rad)')
            ax.set_title('Reference tracking')
        elif name == "tracking_error":
            for traj in trajectories:
                ax.plot(traj.t, traj.e, color=_COLORS.get(traj.controller), label=traj.controller,
                        linewidth=1.5, alpha=0.8)
            ax.axhline(y=0, color='k', linestyle='--', alpha=0.3)
            ax.set_ylabel('Tracking error $y_m - y$ (rad)')
            ax.set_title('Tracking error')
        elif name == "control_effort":
            for traj in trajectories:
                ax.plot(traj.t, traj.u, color=_COLORS.get(traj.controller), label=traj.controller,
                        linewidth=1.5, alpha=0.8)
            ax.set_ylabel('Control input u')
            ax.set_title('Control effort')
        else:
            for traj in trajectories:
                color = _COLORS.get(traj.controller)
                ax.plot(traj.t, traj.theta_f_norm, color=color, label=f'{traj.controller} $|\\theta_f|_\\infty$',
                        linewidth=1.5)
                ax.plot(traj.t, traj.theta_g_norm, color=color, linestyle=':',
                        label=f'{traj.controller} $|\\theta_g|_\\infty$', linewidth=1.5)
            ax.set_ylabel('Parameter norm')
            ax.set_title('Fuzzy parameter evolution')

        ax.set_xlabel('Time (s)')
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        paths.append(_save_figure(fig, os.path.join(out_dir, f"{name}.svg")))

    return paths


def format_report(report):
    """Text of metrics.txt"""
    lines = ["# scenario"]
    lines += [f"  {line}" if line else "" for line in report.scenario.splitlines()]

    for name, metrics in report.metrics.items():
        settle = "never" if metrics.settle_time is None else f"{metrics.settle_time:.6g}"
        lines += [
            "",
            f"# metrics: {name}",
            f"band_min = {metrics.band_min:.6g}",
            f"band_max = {metrics.band_max:.6g}",
            f"rms_full = {metrics.rms_full:.6g}",
            f"rms_final = {metrics.rms_final:.6g}",
            f"max_abs = {metrics.max_abs:.6g}",
            f"settle_time = {settle}  (|e| < {metrics.settle_threshold:g})",
            f"final_window_start = {metrics.final_window_start:.6g}",
        ]

    for name, summary in report.robustness.items():
        recovered = "n/a" if summary.recovered_max_abs is None else f"{summary.recovered_max_abs:.6g}"
        lines += [
            "",
            f"# parameter change: {name}",
            f"change_time = {summary.change_time:.6g}",
            f"pre_rms = {summary.pre_rms:.6g}",
            f"post_rms = {summary.post_rms:.6g}",
            f"max_abs_from_{summary.recovery_start:g} = {recovered}",
        ]

    if report.verdicts:
        lines += ["", "# verdicts"] + report.verdicts
    if report.warnings:
        lines += ["", "# warnings"] + report.warnings
    if report.diverged:
        lines += ["", "# divergence", report.diverged]
    if report.digests:
        lines += ["", "# trajectory digests"] + [f"{name} = {digest}" for name, digest in report.digests.items()]

    return "\n".join(lines) + "\n"

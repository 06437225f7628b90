#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Invariant suite behind the `selftest` command.

Each check returns a CheckResult; run_selftest runs them all, logs one
PASS/FAIL line per check and raises SelfTestFailure if any failed.
"""

import logging
from dataclasses import dataclass

import numpy as np

from shared.errors import SelfTestFailure
from pendulum.control import FOURTH_ORDER_GAINS, STABLE_GAINS, companion_matrix, fl_control, solve_lyapunov
from pendulum.fuzzy import default_partitions, fuzzy_basis, grid_points
from pendulum.plant import (
    PARAM_NAMES,
    PhysicalParams,
    derive_coefficients,
    plant_derivative,
    zero_dynamics_residual,
)
from pendulum.sim import ScenarioConfig, rk4_step, run_simulation, trajectory_digest

logger = logging.getLogger(__name__)

RANDOM_SAMPLES = 1000


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def random_params(rng):
    """Physical parameters drawn within a factor of two of the nominal set"""
    base = PhysicalParams.nominal()
    factors = rng.uniform(0.5, 2.0, size=8)
    return base.scaled(dict(zip(PARAM_NAMES, factors)))


def check_coefficients():
    c = derive_coefficients(PhysicalParams.nominal())
    expected = {
        "a2": -(1.9e-3 * 33.04) / 1.031e-3,
        "a3": (8.6184e-2 * 9.8066 * 0.113) / 1.031e-3,
        "a4": -(2.979e-3 / 1.031e-3),
        "b2": (1.9e-3 * 74.89) / 1.031e-3,
    }
    worst = max(abs(getattr(c, k) - v) / abs(v) for k, v in expected.items())
    passed = c.a1 == -33.04 and c.b1 == 74.89 and worst <= 1e-10
    return CheckResult("coefficients", passed, f"a1={c.a1}, b1={c.b1}, max relative error {worst:.3g}")


def check_zero_dynamics(rng):
    worst = 0.0
    for _ in range(RANDOM_SAMPLES):
        c = derive_coefficients(random_params(rng))
        worst = max(worst, abs(zero_dynamics_residual(c)) / abs(c.a1))
    return CheckResult("zero dynamics identity", worst <= 1e-12, f"max |a1 - a2*b1/b2|/|a1| = {worst:.3g}")


def check_linearization(rng):
    c = derive_coefficients(PhysicalParams.nominal())
    worst = 0.0
    for _ in range(RANDOM_SAMPLES):
        x = rng.uniform(-3.0, 3.0, size=4)
        v = rng.uniform(-10.0, 10.0)
        y_ddot = plant_derivative(c, x, fl_control(c, x, v))[3]
        worst = max(worst, abs(y_ddot - v) / max(1.0, abs(v)))
    return CheckResult("exact linearization", worst <= 1e-10, f"max |y'' - v| = {worst:.3g}")


def check_lyapunov(rng):
    worst = 0.0
    for K in (STABLE_GAINS, FOURTH_ORDER_GAINS):
        A = companion_matrix(K)
        Q = 1000.0 * np.eye(A.shape[0])
        P = solve_lyapunov(A, Q)
        worst = max(worst, np.linalg.norm(A.T @ P + P @ A + Q, np.inf) / 1000.0)
    for _ in range(100):
        n = int(rng.integers(2, 5))
        V, _r = np.linalg.qr(rng.normal(size=(n, n)))
        T = np.diag(-rng.uniform(0.5, 5.0, size=n)) + np.triu(rng.normal(size=(n, n)), k=1)
        A = V @ T @ V.T
        Q = 1000.0 * np.eye(n)
        P = solve_lyapunov(A, Q)
        worst = max(worst, np.linalg.norm(A.T @ P + P @ A + Q, np.inf) / 1000.0)
    return CheckResult("lyapunov residual", worst <= 1e-8, f"max relative residual {worst:.3g}")


def check_partition_of_unity(rng):
    parts = default_partitions()
    worst = 0.0
    for _ in range(10000):
        X = (rng.uniform(-40, 40), rng.uniform(-1.5, 1.5), rng.uniform(-8, 8))
        worst = max(worst, abs(fuzzy_basis(parts, X).sum() - 1.0))
    one_hot = all(
        np.count_nonzero(fuzzy_basis(parts, point)) == 1 and fuzzy_basis(parts, point)[j] == 1.0
        for j, point in enumerate(grid_points(parts))
    )
    return CheckResult("partition of unity", worst < 1e-12 and one_hot,
                       f"max |sum(xi) - 1| = {worst:.3g}, one-hot at grid points: {one_hot}")


def _open_loop_error(dt, reference_state):
    c = derive_coefficients(PhysicalParams.nominal())
    x = np.array([0.0, 0.0, 0.1, 0.0])
    steps = int(round(1.0 / dt))
    for k in range(steps):
        x = rk4_step(lambda t, s: plant_derivative(c, s, 0.0), x, k * dt, dt)
    return np.abs(x - reference_state).max()


def check_rk4_order():
    c = derive_coefficients(PhysicalParams.nominal())
    fine = 2e-5
    x = np.array([0.0, 0.0, 0.1, 0.0])
    for k in range(int(round(1.0 / fine))):
        x = rk4_step(lambda t, s: plant_derivative(c, s, 0.0), x, k * fine, fine)
    ratio = _open_loop_error(1e-3, x) / _open_loop_error(5e-4, x)
    return CheckResult("rk4 order", 12.8 <= ratio <= 19.2, f"error ratio {ratio:.3f} when dt halves")


def check_determinism():
    cfg = ScenarioConfig(controller="adaptive", t_end=1.0)
    first = trajectory_digest(run_simulation(cfg))
    second = trajectory_digest(run_simulation(cfg))
    return CheckResult("determinism", first == second, f"digest {first[:16]}")


def run_selftest(seed=0):
    """Run every invariant check.

    Args:
        seed (int): Seed of the random samples

    Returns:
        list: CheckResult per check

    Raises:
        SelfTestFailure: at least one check failed
    """
    rng = np.random.default_rng(seed)
    checks = [
        ("coefficients", check_coefficients),
        ("zero dynamics identity", lambda: check_zero_dynamics(rng)),
        ("exact linearization", lambda: check_linearization(rng)),
        ("lyapunov residual", lambda: check_lyapunov(rng)),
        ("partition of unity", lambda: check_partition_of_unity(rng)),
        ("rk4 order", check_rk4_order),
        ("determinism", check_determinism),
    ]

    results = []
    for name, check in checks:
        try:
            result = check()
        except Exception as e:
            logger.error(f"Error in selftest {name}: {str(e)}")
            result = CheckResult(name, False, f"raised {type(e).__name__}: {str(e)}")
        logger.info(result.line())
        results.append(result)

    failed = [r.name for r in results if not r.passed]
    if failed:
        raise SelfTestFailure(f"{len(failed)} selftest check(s) failed: {', '.join(failed)}")
    return results

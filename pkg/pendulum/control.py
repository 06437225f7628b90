#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tracking controllers for the rotary inverted pendulum.

This module provides both controllers compared by the experiments:
- ClassicalController: feedback linearization with a PD outer loop
- AdaptiveFuzzyController: indirect adaptive fuzzy control, where fuzzy
  estimates of f and g replace the model and are adapted online by a
  Lyapunov-derived gradient law

and the pieces they are built from: reference generation, the companion
matrix of the error polynomial, a small dense Lyapunov solver, the control
laws and the adaptation-rate law.

Sign conventions: tracking error is e = y_m - y, so the feedback term +K.e
opposes the error. K = (k1, ..., kn) lists the coefficients of
s^n + k1*s^(n-1) + ... + kn and K.e = sum_i k_i * e^(n-i).
"""

import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from shared.errors import InvalidPhysicsError, LyapunovSolveError, NotHurwitzError
from pendulum.fuzzy import (
    DEFAULT_CENTERS,
    DEFAULT_X2_DOMAIN,
    DEFAULT_X3_DOMAIN,
    DEFAULT_X4_DOMAIN,
    default_partitions,
    fuzzy_basis,
    init_from_function,
)
from pendulum.plant import backward_difference_estimate, true_f, true_g

logger = logging.getLogger(__name__)

LYAPUNOV_RTOL = 1e-8

STABLE_GAINS = (25.0, 150.0)
# s^2 + 2s + 8, the classical outer loop
MATCHED_GAINS = (2.0, 8.0)
FOURTH_ORDER_GAINS = (10.0, 37.0, 60.0, 36.0)
PAPER_GAINS = (-0.7, 1.0, 10.8, 0.7)
PAPER_P = 1e3 * np.array([
    [7.7709, 0.3740, -0.5139, 0.7143],
    [0.3740, -4.6545, -0.9861, 0.0809],
    [-0.5139, -0.9861, 0.2394, -0.4861],
    [0.7143, 0.0809, -0.4861, -0.0199],
])

PRESETS = {
    "stable": {
        "order": 2,
        "gains": STABLE_GAINS,
        "gamma1": 35.0,
        "gamma2": 6.0,
        "q": (1000.0,),
        "g_floor": 1.0,
        "theta_cap": 1e4,
        "p_mode": "solved",
        "derivative_tau": 0.2,
    },
    "matched": {
        "order": 2,
        "gains": MATCHED_GAINS,
        "gamma1": 35.0,
        "gamma2": 6.0,
        "q": (1000.0,),
        "g_floor": 1.0,
        "theta_cap": 1e4,
        "p_mode": "solved",
        "derivative_tau": 0.2,
    },
    "paper": {
        "order": 4,
        "gains": PAPER_GAINS,
        "gamma1": 35.0,
        "gamma2": 6.0,
        "q": (1000.0,),
        "g_floor": 1.0,
        "theta_cap": 1e4,
        "p_mode": "paper-matrix",
        "derivative_tau": 0.2,
    },
}

# (sin, cos) weights of the k-th derivative of sin, cycling with period 4
_DERIVATIVE_CYCLE = ((1, 0), (0, 1), (-1, 0), (0, -1))


# ============================================================================
# Configuration models
# ============================================================================

class FLControllerConfig(BaseModel):
    """Outer-loop gains of the feedback linearization controller"""
    model_config = ConfigDict(frozen=True)

    kd: float = Field(2.0, gt=0, description="Rate gain")
    kp: float = Field(8.0, gt=0, description="Position gain")


class ReferenceSignal(BaseModel):
    """Sinusoidal reference y_m(t) = amplitude * sin(frequency * t)"""
    model_config = ConfigDict(frozen=True)

    amplitude: float = Field(0.2, allow_inf_nan=False, description="Amplitude (rad)")
    frequency: float = Field(1.0, ge=0, allow_inf_nan=False, description="Angular frequency (rad/s)")


class AdaptiveControllerConfig(BaseModel):
    """Settings of the adaptive fuzzy controller. Defaults are the 'stable' preset."""
    model_config = ConfigDict(frozen=True)

    order: int = Field(2, ge=2, le=4, description="Length n of the error vector")
    gains: Tuple[float, ...] = Field(STABLE_GAINS, description="K = (k1, ..., kn)")
    gamma1: float = Field(35.0, gt=0, description="f adaptation gain")
    gamma2: float = Field(6.0, gt=0, description="g adaptation gain")
    q: Tuple[float, ...] = Field((1000.0,), description="Diagonal of Q; one value is broadcast")
    g_floor: float = Field(1.0, gt=0, description="Lower clamp on g_hat")
    theta_cap: float = Field(1e4, gt=0, description="Max infinity norm of theta vectors")
    p_mode: Literal["solved", "paper-matrix"] = "solved"
    derivative_tau: float = Field(0.2, ge=0, allow_inf_nan=False,
                                  description="Filter time constant of error derivatives beyond e' (s), 0 for plain differences")
    init_mode: Literal["grid", "offline"] = "grid"
    centers: int = Field(DEFAULT_CENTERS, ge=2, description="Fuzzy sets per input")
    x2_domain: Tuple[float, float] = DEFAULT_X2_DOMAIN
    x3_domain: Tuple[float, float] = DEFAULT_X3_DOMAIN
    x4_domain: Tuple[float, float] = DEFAULT_X4_DOMAIN

    @field_validator('gains')
    @classmethod
    def validate_gains(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if not all(math.isfinite(k) for k in v):
            raise ValueError(f"gains must be finite. Got: {v}")
        return v

    @field_validator('q')
    @classmethod
    def validate_q(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        """Q is diagonal, so positive finite entries make it positive definite"""
        if not v or not all(math.isfinite(d) and d > 0 for d in v):
            raise ValueError(f"q diagonal entries must be positive and finite. Got: {v}")
        return v

    @field_validator('x2_domain', 'x3_domain', 'x4_domain')
    @classmethod
    def validate_domain(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        lo, hi = v
        if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
            raise ValueError(f"domain must be a finite interval [lo, hi] with lo < hi. Got: {v}")
        return v

    @model_validator(mode='after')
    def validate_dimensions(self) -> 'AdaptiveControllerConfig':
        if len(self.gains) != self.order:
            raise ValueError(f"gains must have order={self.order} entries. Got: {len(self.gains)}")
        if len(self.q) not in (1, self.order):
            raise ValueError(f"q must have 1 or {self.order} entries. Got: {len(self.q)}")
        if self.p_mode == "paper-matrix" and self.order != 4:
            raise ValueError("p_mode 'paper-matrix' requires order 4")
        return self

    def q_matrix(self):
        diag = self.q * self.order if len(self.q) == 1 else self.q
        return np.diag(np.array(diag, dtype=float))


def apply_preset(name, overrides=None):
    """Build an adaptive configuration from a named preset plus explicit keys.

    Args:
        name (str): 'stable', 'matched' or 'paper'
        overrides (dict): Explicit settings, applied after the preset

    Returns:
        AdaptiveControllerConfig: Validated configuration
    """
    if name not in PRESETS:
        raise ValueError(f"unknown preset '{name}', expected one of {sorted(PRESETS)}")
    settings = dict(PRESETS[name])
    settings.update(overrides or {})
    return AdaptiveControllerConfig(**settings)


# ============================================================================
# Reference and classical control
# ============================================================================

def reference(t, r, order=4):
    """y_m and its analytic derivatives up to the given order.

    Args:
        t (float): Time (s)
        r (ReferenceSignal): Reference parameters
        order (int): Highest derivative returned

    Returns:
        tuple: (y_m, y_m', ..., y_m^(order))
    """
    w = r.frequency
    s = math.sin(w * t)
    c = math.cos(w * t)
    values = []
    for k in range(order + 1):
        ws, wc = _DERIVATIVE_CYCLE[k % 4]
        values.append(r.amplitude * w ** k * (ws * s + wc * c))
    return tuple(values)


def fl_outer_v(e, edot, ym_ddot, cfg):
    """Outer-loop input v = y_m'' - kd*e' - kp*e, with e = y - y_m here"""
    return ym_ddot - cfg.kd * edot - cfg.kp * e


def fl_control(c, x, v):
    """Feedback linearization u = (1/b2)*(-(a2*x2 + a3*sin x3 + a4*x4) + v).

    Substituted into the plant this gives x4' = v exactly.
    """
    if c.b2 == 0:
        raise InvalidPhysicsError("b2 is zero, feedback linearization is undefined")
    return (-true_f(c, x) + v) / c.b2


# ============================================================================
# Error polynomial, Lyapunov equation
# ============================================================================

def companion_matrix(K):
    """Companion realization of s^n + k1*s^(n-1) + ... + kn.

    Ones on the superdiagonal, last row -(kn, ..., k1).
    """
    K = np.asarray(K, dtype=float).ravel()
    n = K.size
    if n < 1:
        raise ValueError("gain vector must have at least one entry")
    A = np.eye(n, k=1)
    A[-1, :] = -K[::-1]
    return A


def hurwitz_check(A):
    """Raise NotHurwitzError naming the eigenvalue with the largest real part if it is >= 0"""
    eigenvalues = np.linalg.eigvals(A)
    worst = eigenvalues[np.argmax(eigenvalues.real)]
    if not worst.real < 0:
        raise NotHurwitzError(worst)
    return eigenvalues


def _lyapunov_residual(A, P, Q):
    return np.linalg.norm(A.T @ P + P @ A + Q, np.inf)


def solve_lyapunov(A, Q):
    """Solve A^T P + P A = -Q for symmetric positive definite P.

    The n(n+1)/2 upper-triangle entries of P are the unknowns of one dense
    linear system, one equation per upper-triangle entry of the matrix equation.

    Args:
        A (array-like): Hurwitz matrix, n x n
        Q (array-like): Symmetric positive definite matrix, n x n

    Returns:
        numpy.ndarray: P

    Raises:
        NotHurwitzError: A has an eigenvalue with non-negative real part
        LyapunovSolveError: singular system, residual or definiteness check failed
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or Q.shape != (n, n):
        raise ValueError(f"A and Q must be square of equal size. Got: {A.shape}, {Q.shape}")
    if not np.allclose(Q, Q.T):
        raise ValueError("Q must be symmetric")

    hurwitz_check(A)

    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    index = {}
    for unknown, (i, j) in enumerate(pairs):
        index[(i, j)] = index[(j, i)] = unknown

    M = np.zeros((len(pairs), len(pairs)))
    rhs = np.empty(len(pairs))
    for row, (i, j) in enumerate(pairs):
        for k in range(n):
            M[row, index[(k, j)]] += A[k, i]
            M[row, index[(i, k)]] += A[k, j]
        rhs[row] = -Q[i, j]

    try:
        solution = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as e:
        raise LyapunovSolveError(f"Lyapunov linear system is singular: {str(e)}") from e

    P = np.empty((n, n))
    for unknown, (i, j) in enumerate(pairs):
        P[i, j] = P[j, i] = solution[unknown]

    residual = _lyapunov_residual(A, P, Q)
    bound = LYAPUNOV_RTOL * np.linalg.norm(Q, np.inf)
    if not residual <= bound:
        raise LyapunovSolveError(f"Lyapunov residual {residual:.3g} exceeds {bound:.3g}")

    min_eigenvalue = np.linalg.eigvalsh(P).min()
    if not min_eigenvalue > 0:
        raise LyapunovSolveError(f"Lyapunov solution is not positive definite: min eigenvalue {min_eigenvalue:.6g}")

    return P


def paper_matrix_warnings(P, A, Q):
    """Checks of a fixed P that are reported instead of enforced.

    Returns:
        list: Warning messages, empty when P is a valid Lyapunov solution
    """
    warnings = []
    asymmetry = np.abs(P - P.T).max()
    if asymmetry > 0:
        warnings.append(f"paper P matrix is not symmetric: max |P - P^T| = {asymmetry:.6g}")

    min_eigenvalue = np.linalg.eigvalsh((P + P.T) / 2).min()
    if not min_eigenvalue > 0:
        warnings.append(
            f"paper P matrix is not symmetric positive definite: min eigenvalue {min_eigenvalue:.6g}"
        )

    relative = _lyapunov_residual(A, P, Q) / np.linalg.norm(Q, np.inf)
    if not relative <= LYAPUNOV_RTOL:
        warnings.append(
            f"paper P matrix does not solve A^T P + P A = -Q: relative residual {relative:.6g}"
        )
    return warnings


# ============================================================================
# Adaptive fuzzy control laws
# ============================================================================

def gain_feedback(K, e_vec):
    """K.e = sum_i k_i * e^(n-i) for e_vec = (e, e', ..., e^(n-1))"""
    return sum(k * e for k, e in zip(K, reversed(e_vec)))


def adaptive_control(theta_f, theta_g, xi_f, xi_g, e_vec, ym_dn, cfg):
    """Certainty-equivalence control u = (-f_hat + y_m^(n) + K.e) / max(g_hat, g_floor).

    Args:
        theta_f, theta_g (numpy.ndarray): Fuzzy parameters
        xi_f, xi_g (numpy.ndarray): Basis vectors at the current state
        e_vec (sequence): (e, e', ..., e^(n-1)) with e = y_m - y
        ym_dn (float): n-th derivative of the reference
        cfg (AdaptiveControllerConfig): Controller settings

    Returns:
        tuple: (u, clamped) where clamped tells whether g_floor was used
    """
    f_hat = float(np.dot(theta_f, xi_f))
    g_hat = float(np.dot(theta_g, xi_g))
    clamped = not g_hat >= cfg.g_floor
    divisor = cfg.g_floor if clamped else g_hat
    u = (-f_hat + ym_dn + gain_feedback(cfg.gains, e_vec)) / divisor
    return u, clamped


def project_rate(rate, theta, cap):
    """Zero the rate components that would push |theta| beyond cap"""
    if theta is None:
        return rate
    outward = (np.abs(theta) >= cap) & (rate * theta > 0)
    if outward.any():
        rate = np.where(outward, 0.0, rate)
    return rate


def adaptation_rates(e_vec, P, b, xi_f, xi_g, u, cfg, theta_f=None, theta_g=None):
    """Gradient adaptation law with parameter projection.

    theta_f' = -gamma1 * (e.P.b) * xi_f
    theta_g' = -gamma2 * (e.P.b) * xi_g * u

    Args:
        e_vec (sequence): Error vector
        P (numpy.ndarray): Lyapunov matrix
        b (numpy.ndarray): Input vector (0, ..., 0, 1)
        xi_f, xi_g (numpy.ndarray): Basis vectors
        u (float): Applied control input
        cfg (AdaptiveControllerConfig): Gains and theta_cap
        theta_f, theta_g (numpy.ndarray): Current parameters, enable projection

    Returns:
        tuple: (theta_f_dot, theta_g_dot)
    """
    s = float(np.dot(e_vec, P @ b))
    theta_f_dot = (-cfg.gamma1 * s) * xi_f
    theta_g_dot = (-cfg.gamma2 * s * u) * xi_g
    return (
        project_rate(theta_f_dot, theta_f, cfg.theta_cap),
        project_rate(theta_g_dot, theta_g, cfg.theta_cap),
    )


def filtered_difference(prev_estimate, prev, curr, dt, tau):
    """Backward difference passed through a first-order low-pass filter.

    The input held over a step enters e'' directly, so unfiltered higher
    differences feed u back on itself with a gain of order k1/dt.

    Args:
        prev_estimate (float): Filter output at the previous sample
        prev, curr (float): Consecutive samples of the signal
        dt (float): Sample period
        tau (float): Filter time constant, 0 gives (curr - prev)/dt

    Returns:
        float: Filtered derivative estimate
    """
    raw = backward_difference_estimate(prev, curr, dt)
    if tau <= 0:
        return raw
    alpha = dt / (dt + tau)
    return (1.0 - alpha) * prev_estimate + alpha * raw


# ============================================================================
# Controller objects used by the simulation loop
# ============================================================================

@dataclass
class ControlSample:
    """One zero-order-hold controller output.

    Attributes:
        u (float): Control input held over the step
        clamped (bool): Whether the g_hat floor was used
        e_vec (numpy.ndarray): Error vector at the sample (e = y_m - y)
        xi (numpy.ndarray): Fuzzy basis at the sample, None for the classical controller
    """
    u: float
    clamped: bool
    e_vec: np.ndarray
    xi: Optional[np.ndarray] = None


class ClassicalController:
    """Feedback linearization controller built on the nominal model"""

    name = "classical"
    adaptive = False

    def __init__(self, coeffs, cfg=None):
        """Initialize the controller.

        Args:
            coeffs (StateSpaceCoeffs): Model coefficients the law cancels
            cfg (FLControllerConfig): Outer-loop gains
        """
        if coeffs.b2 == 0:
            raise InvalidPhysicsError("b2 is zero, feedback linearization is undefined")
        self.coeffs = coeffs
        self.cfg = cfg or FLControllerConfig()
        self.warnings = []

    def command(self, t, x, ref):
        """Control input from the (measured) state at one sample.

        Args:
            t (float): Sample time
            x (numpy.ndarray): State used by the controller
            ref (tuple): Reference and derivatives at t

        Returns:
            ControlSample: Held input and diagnostics
        """
        v = fl_outer_v(x[2] - ref[0], x[3] - ref[1], ref[2], self.cfg)
        u = fl_control(self.coeffs, x, v)
        return ControlSample(u=u, clamped=False, e_vec=np.array([ref[0] - x[2], ref[1] - x[3]]))


class AdaptiveFuzzyController:
    """Indirect adaptive fuzzy controller.

    Owns the fuzzy partitions, the current parameter vectors, the Lyapunov
    matrix and the memory used for numerically differentiated errors.
    """

    name = "adaptive"
    adaptive = True

    def __init__(self, cfg, coeffs, dt, theta_f=None, theta_g=None):
        """Initialize the controller.

        Args:
            cfg (AdaptiveControllerConfig): Controller settings
            coeffs (StateSpaceCoeffs): Nominal model used for the initial estimates
            dt (float): Sample period of the filtered error derivatives
            theta_f (numpy.ndarray): Initial f parameters, sampled from the
                nominal f on the rule grid when omitted
            theta_g (numpy.ndarray): Initial g parameters, nominal b2 when omitted
        """
        self.cfg = cfg
        self.dt = dt
        self.order = cfg.order
        self.warnings = []
        self.partitions = default_partitions(cfg.centers, cfg.x2_domain, cfg.x3_domain, cfg.x4_domain)

        if theta_f is None:
            theta_f = init_from_function(self.partitions, lambda X: true_f(coeffs, (0.0, *X)))
        if theta_g is None:
            theta_g = init_from_function(self.partitions, lambda X: true_g(coeffs))
        self.theta_f = np.array(theta_f, dtype=float)
        self.theta_g = np.array(theta_g, dtype=float)
        self.clip_parameters()

        self.A = companion_matrix(cfg.gains)
        self.b = np.zeros(self.order)
        self.b[-1] = 1.0
        self.Q = cfg.q_matrix()

        if cfg.p_mode == "solved":
            self.P = solve_lyapunov(self.A, self.Q)
        else:
            self.P = PAPER_P.copy()
            self.warnings.extend(paper_matrix_warnings(self.P, self.A, self.Q))
        for warning in self.warnings:
            logger.warning(warning)

        self.clamp_count = 0
        self._previous = None
        self._samples = 0

    @property
    def rule_count(self):
        return self.theta_f.size

    def clip_parameters(self):
        cap = self.cfg.theta_cap
        np.clip(self.theta_f, -cap, cap, out=self.theta_f)
        np.clip(self.theta_g, -cap, cap, out=self.theta_g)

    def set_parameters(self, theta_f, theta_g):
        self.theta_f = np.array(theta_f, dtype=float)
        self.theta_g = np.array(theta_g, dtype=float)
        self.clip_parameters()

    def _error_vector(self, x, ref):
        e_vec = np.zeros(self.order)
        e_vec[0] = ref[0] - x[2]
        e_vec[1] = ref[1] - x[3]
        for j in range(2, self.order):
            # derivative j needs j-1 earlier samples
            if self._samples >= j - 1:
                e_vec[j] = filtered_difference(self._previous[j], self._previous[j - 1], e_vec[j - 1],
                                               self.dt, self.cfg.derivative_tau)
        self._previous = e_vec.copy()
        self._samples += 1
        return e_vec

    def command(self, t, x, ref):
        """Control input from the (measured) state at one sample.

        Args:
            t (float): Sample time
            x (numpy.ndarray): State used by the controller
            ref (tuple): Reference and derivatives at t, at least up to the order

        Returns:
            ControlSample: Held input, clamp flag, error vector and basis
        """
        e_vec = self._error_vector(x, ref)
        xi = fuzzy_basis(self.partitions, (x[1], x[2], x[3]))
        u, clamped = adaptive_control(self.theta_f, self.theta_g, xi, xi, e_vec, ref[self.order], self.cfg)
        if clamped:
            self.clamp_count += 1
            logger.debug(f"g_hat below floor {self.cfg.g_floor} at t={t:.4f}")
        return ControlSample(u=u, clamped=clamped, e_vec=e_vec, xi=xi)

    def rates(self, t, x, theta_f, theta_g, sample, ref_signal=None):
        """Adaptation rates inside one integration step.

        With a reference signal the error and basis follow the stage state x;
        without one the values held in the sample are used.
        """
        if ref_signal is None:
            e_vec = sample.e_vec
            xi = sample.xi
        else:
            ym, ym_dot = reference(t, ref_signal, order=1)
            e_vec = sample.e_vec.copy()
            e_vec[0] = ym - x[2]
            e_vec[1] = ym_dot - x[3]
            xi = fuzzy_basis(self.partitions, (x[1], x[2], x[3]))
        return adaptation_rates(e_vec, self.P, self.b, xi, xi, sample.u, self.cfg, theta_f, theta_g)

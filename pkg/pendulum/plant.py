#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Rotary inverted pendulum plant.

State vector x = (x1, x2, x3, x4):
- x1: base angle (rad)
- x2: base rate (rad/s)
- x3: pendulum angle from the upright position (rad), the measured output y
- x4: pendulum rate (rad/s)

The motor-driven base and the pendulum obey

    x1' = x2
    x2' = a1*x2 + b1*u
    x3' = x4
    x4' = a2*x2 + a3*sin(x3) + a4*x4 + b2*u

with a1 = -a_p (the state-space sign is authoritative). Angles are not wrapped.
All functions here are pure and may be called from concurrent runs.
"""

import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from shared.errors import InvalidPhysicsError

logger = logging.getLogger(__name__)

PARAM_NAMES = ("m1", "k1", "a_p", "J1", "g", "l1", "c1", "k_p")

ZERO_DYNAMICS_RTOL = 1e-12


class PhysicalParams(BaseModel):
    """Physical constants of the pendulum and its DC motor"""
    model_config = ConfigDict(frozen=True)

    m1: float = Field(8.6184e-2, description="Pendulum mass (kg)")
    k1: float = Field(1.9e-3, description="Motor torque constant")
    a_p: float = Field(33.04, description="Motor parameter (1/s)")
    J1: float = Field(1.031e-3, description="Pendulum inertia (kg m^2)")
    g: float = Field(9.8066, description="Gravity (m/s^2)")
    l1: float = Field(0.113, description="Pendulum length (m)")
    c1: float = Field(2.979e-3, description="Friction constant")
    k_p: float = Field(74.89, description="Motor gain")

    @field_validator(*PARAM_NAMES)
    @classmethod
    def validate_finite(cls, v: float) -> float:
        """Reject NaN and infinite parameter values"""
        if not math.isfinite(v):
            raise ValueError(f"parameter must be finite. Got: {v}")
        return v

    @classmethod
    def nominal(cls) -> "PhysicalParams":
        """Parameter set of the laboratory pendulum"""
        return cls()

    def scaled(self, multipliers) -> "PhysicalParams":
        """Return a copy with each named parameter multiplied.

        Args:
            multipliers (dict): Parameter name -> multiplier

        Returns:
            PhysicalParams: Scaled parameter set
        """
        update = {name: getattr(self, name) * m for name, m in multipliers.items() if m != 1.0}
        if not update:
            return self
        return self.model_copy(update=update)


class StateSpaceCoeffs(BaseModel):
    """Coefficients a1..a4, b1, b2 of the state equations"""
    model_config = ConfigDict(frozen=True)

    a1: float
    a2: float
    a3: float
    a4: float
    b1: float
    b2: float


def check_physical_invariants(p):
    """List every physical invariant violated by a parameter set.

    Args:
        p (PhysicalParams): Parameters to check

    Returns:
        list: Human readable violations, empty when the set is valid
    """
    problems = []
    for name in PARAM_NAMES:
        value = getattr(p, name)
        if not math.isfinite(value):
            problems.append(f"{name} must be finite (got {value})")
    for name in ("J1", "m1", "l1"):
        value = getattr(p, name)
        if not value > 0:
            problems.append(f"{name} must be positive (got {value})")
    for name in ("k1", "k_p"):
        value = getattr(p, name)
        if value == 0:
            problems.append(f"{name} must be non-zero")
    return problems


def derive_coefficients(p):
    """Compute the state-space coefficients from the physical parameters.

    Args:
        p (PhysicalParams): Physical parameters

    Returns:
        StateSpaceCoeffs: a1 = -a_p, a2 = -k1*a_p/J1, a3 = m1*g*l1/J1,
            a4 = -c1/J1, b1 = k_p, b2 = k1*k_p/J1

    Raises:
        InvalidPhysicsError: J1 <= 0, k1 == 0 or k_p == 0
    """
    if not p.J1 > 0:
        raise InvalidPhysicsError(f"J1 must be positive (got {p.J1})")
    if p.k1 == 0:
        raise InvalidPhysicsError("k1 must be non-zero")
    if p.k_p == 0:
        raise InvalidPhysicsError("k_p must be non-zero")

    return StateSpaceCoeffs(
        a1=-p.a_p,
        a2=-(p.k1 * p.a_p / p.J1),
        a3=p.m1 * p.g * p.l1 / p.J1,
        a4=-(p.c1 / p.J1),
        b1=p.k_p,
        b2=p.k1 * p.k_p / p.J1,
    )


def plant_derivative(c, x, u):
    """Right-hand side of the state equations.

    Args:
        c (StateSpaceCoeffs): Coefficients
        x (array-like): State (x1, x2, x3, x4)
        u (float): Motor input

    Returns:
        numpy.ndarray: State derivative
    """
    x2 = x[1]
    x4 = x[3]
    return np.array([
        x2,
        c.a1 * x2 + c.b1 * u,
        x4,
        c.a2 * x2 + c.a3 * np.sin(x[2]) + c.a4 * x4 + c.b2 * u,
    ])


def true_f(c, x):
    """Drift of the output's second derivative: a2*x2 + a3*sin(x3) + a4*x4"""
    return c.a2 * x[1] + c.a3 * np.sin(x[2]) + c.a4 * x[3]


def true_g(c):
    """Input gain of the output's second derivative (state independent)"""
    return c.b2


def zero_dynamics_residual(c):
    """a1 - a2*b1/b2, which vanishes for coefficients derived from real parameters.

    Raises:
        InvalidPhysicsError: b2 is zero
    """
    if c.b2 == 0:
        raise InvalidPhysicsError("b2 is zero, zero dynamics are undefined")
    return c.a1 - c.a2 * c.b1 / c.b2


def zero_dynamics_poles(c):
    """Roots of s*(s - a1 + a2*b1/b2), the characteristic polynomial of the zero dynamics"""
    return (0.0, zero_dynamics_residual(c))


def is_minimum_phase(c):
    """True when no zero-dynamics pole lies strictly in the right half plane.

    The pendulum's poles are both at the origin, so it is only marginally
    minimum phase. Round-off below ZERO_DYNAMICS_RTOL*|a1| counts as zero.
    """
    tolerance = ZERO_DYNAMICS_RTOL * abs(c.a1)
    return all(pole <= tolerance for pole in zero_dynamics_poles(c))


def relative_degree(c):
    """Number of output derivatives until u appears: y' = x4 has none, y'' has b2*u."""
    if c.b2 == 0:
        raise InvalidPhysicsError("b2 is zero, the output is not controllable through u")
    return 2


def normal_form(c, x):
    """Coordinates (x3, x4, x1 + x3, x2 - (b1/b2)*x4).

    The first pair is the output chain, the second pair the internal states
    whose evolution is the zero dynamics.
    """
    if c.b2 == 0:
        raise InvalidPhysicsError("b2 is zero, normal form is undefined")
    return np.array([x[2], x[3], x[0] + x[2], x[1] - (c.b1 / c.b2) * x[3]])


def backward_difference_estimate(prev, curr, dt):
    """First-order backward difference (curr - prev)/dt.

    Raises:
        ValueError: dt is not positive
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive. Got: {dt}")
    return (curr - prev) / dt

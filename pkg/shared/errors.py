#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Error hierarchy for the pendulum experiments.

Every error class carries the process exit status the command line front end
reports for it, so a failed run can be told apart from a shell script:
- ConfigError: malformed or inconsistent scenario file
- ScenarioInvalidError: parameters or schedule break the plant invariants
- InvalidPhysicsError: coefficient derivation preconditions violated
- NotHurwitzError: gain vector does not give a stable error polynomial
- LyapunovSolveError: Lyapunov equation could not be solved or checked
- SimulationDivergence: state left the finite, bounded region
- OutputError: result files could not be written
- SelfTestFailure: the invariant suite found a violation
"""


class PendulumError(Exception):
    """Base class for all errors raised by the pendulum package."""

    exit_code = 1


class ConfigError(PendulumError):
    """Syntax or semantic error in a scenario file."""

    exit_code = 2

    def __init__(self, message, line=None):
        """Initialize the error.

        Args:
            message (str): Description of the problem
            line (int): 1-based line number in the scenario file, if known
        """
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ScenarioInvalidError(PendulumError):
    exit_code = 3


class InvalidPhysicsError(PendulumError, ValueError):
    exit_code = 4


class NotHurwitzError(PendulumError):
    """Raised when a matrix that must be Hurwitz has an unstable eigenvalue."""

    exit_code = 5

    def __init__(self, eigenvalue):
        self.eigenvalue = complex(eigenvalue)
        super().__init__(
            f"matrix is not Hurwitz, no positive definite Lyapunov solution exists: "
            f"eigenvalue {self.eigenvalue.real:.6g}{self.eigenvalue.imag:+.6g}j "
            f"has non-negative real part"
        )


class LyapunovSolveError(PendulumError):
    exit_code = 6


class SimulationDivergence(PendulumError):
    """Raised when the simulated state stops being finite or bounded.

    Attributes:
        t (float): Simulation time at which the divergence was detected
        trajectory: Partial trajectory up to the last healthy sample (set by the
            simulation loop before re-raising)
    """

    exit_code = 7

    def __init__(self, message, t, trajectory=None):
        self.t = t
        self.trajectory = trajectory
        super().__init__(f"simulation diverged at t={t:.6g}: {message}")


class OutputError(PendulumError):
    exit_code = 8


class SelfTestFailure(PendulumError):
    exit_code = 9

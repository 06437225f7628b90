"""Shared utilities for the pendulum control experiments."""

from .errors import (
    PendulumError,
    ConfigError,
    ScenarioInvalidError,
    InvalidPhysicsError,
    NotHurwitzError,
    LyapunovSolveError,
    SimulationDivergence,
    OutputError,
    SelfTestFailure
)
from .result_store import (
    ResultStore,
    calculate_content_hash
)

__all__ = [
    'PendulumError',
    'ConfigError',
    'ScenarioInvalidError',
    'InvalidPhysicsError',
    'NotHurwitzError',
    'LyapunovSolveError',
    'SimulationDivergence',
    'OutputError',
    'SelfTestFailure',
    'ResultStore',
    'calculate_content_hash'
]

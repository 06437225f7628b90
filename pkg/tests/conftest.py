"""Shared fixtures for the pendulum test suite."""

import os
import sys

_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, _ROOT)

import pytest

from pendulum.plant import PhysicalParams, derive_coefficients


@pytest.fixture
def nominal_params():
    return PhysicalParams.nominal()


@pytest.fixture
def nominal_coeffs():
    return derive_coefficients(PhysicalParams.nominal())

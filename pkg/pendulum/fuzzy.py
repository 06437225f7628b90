#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Fuzzy approximators on a grid of triangular membership functions.

An approximator maps an input tuple X (here the plant states x2, x3, x4) to
f_hat(X) = theta . xi(X), where xi is the product-inference basis vector:
one component per rule (a combination of one fuzzy set per input), the product
of the input memberships normalised by the sum over all rules. Triangular
partitions with flat shoulders sum to one at every point, so xi is a convex
weight vector everywhere, also outside the domain box.

Rules are ordered lexicographically over (input-1 index, input-2 index, ...).
"""

import itertools
import logging
import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_CENTERS = 5
DEFAULT_X2_DOMAIN = (-30.0, 30.0)
DEFAULT_X3_DOMAIN = (-math.pi / 3, math.pi / 3)
DEFAULT_X4_DOMAIN = (-6.0, 6.0)


@dataclass(frozen=True)
class Partition:
    """Triangular fuzzy sets over one input variable.

    The set of center i rises linearly from center i-1 and falls to center
    i+1; the first and last sets stay at 1 beyond the domain edges.

    Attributes:
        centers (tuple): Strictly increasing centers; first is the domain's
            lower bound, last its upper bound
    """
    centers: tuple

    def __post_init__(self):
        centers = tuple(float(c) for c in self.centers)
        if len(centers) < 2:
            raise ValueError(f"a partition needs at least two centers. Got: {len(centers)}")
        if not all(math.isfinite(c) for c in centers):
            raise ValueError("partition centers must be finite")
        if any(b <= a for a, b in zip(centers, centers[1:])):
            raise ValueError(f"partition centers must be strictly increasing. Got: {centers}")
        object.__setattr__(self, "centers", centers)

    @classmethod
    def uniform(cls, lo, hi, count):
        """Evenly spaced centers from lo to hi inclusive"""
        if not hi > lo:
            raise ValueError(f"domain upper bound must exceed lower bound. Got: [{lo}, {hi}]")
        return cls(tuple(np.linspace(lo, hi, count)))

    @property
    def lo(self):
        return self.centers[0]

    @property
    def hi(self):
        return self.centers[-1]

    @property
    def size(self):
        return len(self.centers)

    def memberships(self, x):
        """Membership of x in every set of the partition.

        Args:
            x (float): Input value

        Returns:
            numpy.ndarray: One value per center; at most two are non-zero and
                they sum to 1
        """
        centers = self.centers
        if math.isnan(x):
            return np.full(len(centers), np.nan)
        mu = np.zeros(len(centers))
        if x <= centers[0]:
            mu[0] = 1.0
            return mu
        if x >= centers[-1]:
            mu[-1] = 1.0
            return mu

        j = bisect_right(centers, x) - 1
        w = (x - centers[j]) / (centers[j + 1] - centers[j])
        mu[j] = 1.0 - w
        mu[j + 1] = w
        return mu


def triangular_membership(part, index, x):
    """Membership of x in the set centred at part.centers[index].

    Raises:
        IndexError: index is not a valid center index
    """
    if not 0 <= index < part.size:
        raise IndexError(f"membership index {index} out of range for {part.size} centers")
    return float(part.memberships(x)[index])


def fuzzy_basis(parts, X):
    """Normalised product-inference basis vector xi(X).

    Args:
        parts (sequence): One Partition per input
        X (sequence): One coordinate per partition

    Returns:
        numpy.ndarray: Length prod(p_i), components in [0, 1] summing to 1
    """
    if len(parts) != len(X):
        raise ValueError(f"expected {len(parts)} inputs, got {len(X)}")

    xi = parts[0].memberships(X[0])
    for part, x in zip(parts[1:], X[1:]):
        xi = np.multiply.outer(xi, part.memberships(x)).ravel()

    total = xi.sum()
    if not math.isfinite(total):
        return np.full_like(xi, np.nan)
    # Shoulders keep at least one rule active everywhere
    assert total > 0, f"degenerate fuzzy basis at {tuple(X)}"
    return xi / total


def rule_count(parts):
    return int(np.prod([part.size for part in parts]))


def grid_points(parts):
    """Rule centers in lexicographic rule order, shape (rules, inputs)"""
    return np.array(list(itertools.product(*(part.centers for part in parts))))


@dataclass
class FuzzyApproximator:
    """Linear-in-parameters fuzzy system f_hat(X) = theta . xi(X).

    Attributes:
        partitions (tuple): Input partitions
        theta (numpy.ndarray): One output-set center per rule
    """
    partitions: tuple
    theta: np.ndarray = field(default=None)

    def __post_init__(self):
        self.partitions = tuple(self.partitions)
        count = rule_count(self.partitions)
        if self.theta is None:
            self.theta = np.zeros(count)
        self.theta = np.array(self.theta, dtype=float)
        if self.theta.shape != (count,):
            raise ValueError(f"theta must have {count} components. Got shape: {self.theta.shape}")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta components must be finite")

    def basis(self, X):
        return fuzzy_basis(self.partitions, X)

    def evaluate(self, X):
        return evaluate(self, X)

    def grid_points(self):
        return grid_points(self.partitions)

    def theta_rows(self):
        """Rows (rule index, center coordinates..., value) for inspection exports"""
        return [
            (j, *(float(c) for c in point), float(value))
            for j, (point, value) in enumerate(zip(self.grid_points(), self.theta))
        ]

    @classmethod
    def from_function(cls, partitions, fn):
        return cls(partitions, init_from_function(partitions, fn))


def evaluate(fa, X):
    """theta . xi(X); always within [min theta, max theta]"""
    return float(np.dot(fa.theta, fuzzy_basis(fa.partitions, X)))


def init_from_function(parts, fn):
    """Sample fn at every rule center to build theta.

    Args:
        parts (sequence): Input partitions
        fn (callable): Maps a coordinate tuple to a scalar

    Returns:
        numpy.ndarray: theta in lexicographic rule order

    Raises:
        ValueError: fn returned a non-finite value at some grid point
    """
    theta = np.empty(rule_count(parts))
    for j, point in enumerate(itertools.product(*(part.centers for part in parts))):
        value = float(fn(point))
        if not math.isfinite(value):
            raise ValueError(f"function is not finite at grid point {point}: {value}")
        theta[j] = value
    return theta


def fit_from_samples(parts, X, y, ridge=1e-2, prior=None):
    """Least-squares theta from input/output samples, shrunk toward a prior.

    Minimises |Phi theta - y|^2 + ridge*|theta - prior|^2, where row i of Phi
    is xi(X[i]). Rules never visited by the samples keep their prior value.

    Args:
        parts (sequence): Input partitions
        X (array-like): Samples, shape (N, inputs)
        y (array-like): Observed outputs, shape (N,)
        ridge (float): Regularisation weight, > 0
        prior (array-like): Prior theta, zeros when omitted

    Returns:
        numpy.ndarray: Fitted theta
    """
    if not ridge > 0:
        raise ValueError(f"ridge must be positive. Got: {ridge}")

    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"got {X.shape[0]} input samples but {y.shape[0]} outputs")

    count = rule_count(parts)
    prior = np.zeros(count) if prior is None else np.asarray(prior, dtype=float)

    phi = np.array([fuzzy_basis(parts, row) for row in X]).reshape(-1, count)
    lhs = phi.T @ phi + ridge * np.eye(count)
    rhs = phi.T @ y + ridge * prior
    theta = np.linalg.solve(lhs, rhs)

    logger.debug(f"Fitted {count} fuzzy parameters from {X.shape[0]} samples")
    return theta


def default_partitions(centers=DEFAULT_CENTERS, x2_domain=DEFAULT_X2_DOMAIN,
                       x3_domain=DEFAULT_X3_DOMAIN, x4_domain=DEFAULT_X4_DOMAIN):
    """Uniform partitions over the (x2, x3, x4) inputs of both approximators"""
    return (
        Partition.uniform(*x2_domain, centers),
        Partition.uniform(*x3_domain, centers),
        Partition.uniform(*x4_domain, centers),
    )

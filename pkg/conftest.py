import os

import numpy as np
import pytest

from technology import Fdh, HRep, VrsHull


def property_trials(default: int) -> int:
    """Trial count for randomized suites; NETPUT_EFF_PROPERTY_TRIALS raises it to acceptance size."""
    raw = os.getenv("NETPUT_EFF_PROPERTY_TRIALS")
    return int(raw) if raw else default


def random_points(rng: np.random.Generator, m: int, n: int, k: int) -> np.ndarray:
    """k observations with inputs in [-4, -1] and outputs in [1, 4]."""
    x = rng.uniform(1.0, 4.0, size=(k, m))
    y = rng.uniform(1.0, 4.0, size=(k, n))
    return np.hstack([-x, y])


def interior_netput(rng: np.random.Generator, points: np.ndarray, m: int) -> np.ndarray:
    """A convex combination of the points pushed strictly inside the technology."""
    t = rng.dirichlet(np.ones(points.shape[0]))
    z = t @ points
    z[:m] *= rng.uniform(1.05, 1.5, size=m)
    z[m:] *= rng.uniform(0.5, 0.95, size=z.size - m)
    return z


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def example_hrep():
    """{(x1, x2) : x1 <= 0, x1 + x2 <= 0, x2 <= 2}"""
    return HRep([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], [0.0, 0.0, 2.0])


@pytest.fixture
def two_point_fdh():
    return Fdh([[-2.0, 2.0], [-4.0, 5.0]])


@pytest.fixture
def small_vrs():
    return VrsHull([[-1.0, 1.0], [-2.0, 3.0]])


@pytest.fixture
def small_weak_frontier():
    """Output 1 is capped at 1 on every input level from -2 up."""
    return VrsHull([[-1.0, 1.0], [-2.0, 1.0], [-3.0, 0.5]])

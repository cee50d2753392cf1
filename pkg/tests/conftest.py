import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from uwbrelloc.se2 import Pose2D
from uwbrelloc.simulator import preset, run_scenario

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

coord = st.floats(-50.0, 50.0, allow_nan=False, allow_infinity=False)
angle = st.floats(-4 * math.pi, 4 * math.pi, allow_nan=False, allow_infinity=False)
poses = st.builds(Pose2D, coord, coord, angle)


def pose_close(a: Pose2D, b: Pose2D, tol: float = 1e-9) -> bool:
    d = math.remainder(a.theta - b.theta, 2 * math.pi)
    return abs(a.x - b.x) <= tol and abs(a.y - b.y) <= tol and abs(d) <= tol


@pytest.fixture(scope="session")
def short_noisy_dataset():
    sc = preset("test-case-1", seed=11, laps=1)
    return sc, run_scenario(sc)


@pytest.fixture(scope="session")
def short_exact_dataset():
    sc = preset("test-case-1", noise_free=True, laps=1)
    return sc, run_scenario(sc)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

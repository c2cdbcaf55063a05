import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nonexpansive.maps import MapSpec, make_map
from nonexpansive.metric_core import SpaceSpec, make_space

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def space(name, dim=None, **params):
    return make_space(SpaceSpec(name, dim, params))


def dmap(space_obj, name, **params):
    return make_map(MapSpec(name, params), space_obj)


@pytest.fixture(scope="session")
def line():
    return space("euclidean", 1)


@pytest.fixture(scope="session")
def circle():
    return space("circle")


@pytest.fixture(scope="session")
def disk():
    return space("poincare-disk")


@pytest.fixture(scope="session")
def lattice():
    return space("integer-lattice", 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


TAU = 2 * math.pi


# acceptance verdicts, one line per criterion, echoed after the run
ACCEPTANCE_LOG: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line(line)

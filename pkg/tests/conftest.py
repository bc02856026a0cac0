import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hfact.grid import Ball, Grid, ball_indicator
from hfact.operators import KernelParams
from hfact.weights import ExponentConfig, WeightVector

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def exponents():
    return ExponentConfig(2, 1, 0.25, (4.0, 4.0), 4.0)


@pytest.fixture
def kp(exponents):
    return exponents.kernel_params()


@pytest.fixture
def grid129():
    return Grid.uniform(1, -8, 8, 129)


@pytest.fixture
def small_grid():
    return Grid.uniform(1, -8, 8, 65)


@pytest.fixture
def unit_weights(exponents, grid129):
    return WeightVector.unit(exponents, grid129)


@pytest.fixture
def two_bumps(grid129):
    B1, B2 = Ball((-4.0,), 0.5), Ball((4.0,), 0.5)
    return ball_indicator(grid129, B1), -ball_indicator(grid129, B2), B1, B2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one pass/fail line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE_LINES, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cellqos.estimators import Scenario, simulate_realization
from cellqos.geometry import Window
from cellqos.propagation import ShadowingParams

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_scenario():
    # about 15 stations, coarse pixels; cheap enough for unit tests
    return Scenario(window=Window.disc(1.0), pixel_size=0.04, shadowing=ShadowingParams(10.0, 0.05))


@pytest.fixture(scope="session")
def small_realization(small_scenario):
    return simulate_realization(small_scenario, base_seed=3, index=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)

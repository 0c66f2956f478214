import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nhk import build

settings.register_profile("nhk", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("nhk")

# lines collected by the acceptance tests, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def vrd():
    return build("vrd")


@pytest.fixture(scope="session")
def knife():
    return build("knife-edge")


@pytest.fixture(scope="session")
def snake():
    return build("snakeboard")


@pytest.fixture(scope="session", params=["vrd", "knife-edge", "snakeboard"])
def any_bundle(request):
    return build(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

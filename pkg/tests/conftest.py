import numpy as np
import pytest

from tsmc.targets import GaussianIidPrior, quadratic_energy


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def gaussian_problem():
    """Standard normal prior tilted by a diagonal quadratic."""
    return GaussianIidPrior.standard(2), quadratic_energy(np.diag([2.0, 0.5]))


def pytest_configure(config):
    config.criteria_lines = []


@pytest.fixture(scope="session")
def criteria(request):
    """Collects one PASS/FAIL line per acceptance criterion."""
    return request.config.criteria_lines


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "criteria_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

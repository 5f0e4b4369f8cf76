import numpy as np
import pytest

from jmgt.medium import ExponentialKernel, MediumParams


@pytest.fixture
def critical():
    return MediumParams(tau=1.0, c=1.0, b=1.0)


@pytest.fixture
def subcritical():
    return MediumParams(tau=1.0, c=1.0, b=1.5)


@pytest.fixture
def kernel():
    return ExponentialKernel(m=0.5, tau_g=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

"""Shared fixtures: one bath, one calibration, a few grids."""

import numpy as np
import pytest

from grainbath.bath import BathMaxwellian
from grainbath.grid import build_grid
from grainbath.kernels import calibrate_C0


@pytest.fixture(scope="session")
def bath():
    return BathMaxwellian(theta=1.0)


@pytest.fixture(scope="session")
def constants(bath):
    consts, report = calibrate_C0(bath)
    assert report.spread <= report.tol
    return consts


@pytest.fixture(scope="session")
def grid48(bath):
    return build_grid(48, bath)


@pytest.fixture(scope="session")
def grid64(bath):
    return build_grid(64, bath)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import math

import numpy as np
import pytest
from hypothesis import settings

from tensegrity.mechanism import MechanismParams

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def unit():
    return MechanismParams(1.0, 1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def angles_close(a, b, tol):
    return abs(math.remainder(a - b, 2 * math.pi)) <= tol


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: full acceptance criteria (slow)")


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULT_LINES:
            terminalreporter.write_line(line)

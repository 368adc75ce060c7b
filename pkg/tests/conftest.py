import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ddmpc.plant import LtiSystem, random_lti

# verdict lines appended by the acceptance suite, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_lti():
    """A fixed well-behaved 3-state, 2-in, 2-out system."""
    return random_lti(3, 2, 2, spectral_radius_max=0.85, seed=7)


@pytest.fixture
def siso_lti():
    return random_lti(2, 1, 1, spectral_radius_max=0.8, seed=3)


def pe_input(rng, length: int, dim: int, low=-1.0, high=1.0) -> np.ndarray:
    return rng.uniform(low, high, (length, dim))


@pytest.fixture
def pe_data(small_lti, rng):
    """Persistently exciting input-output data from the fixed system."""
    u = pe_input(rng, 120, small_lti.n_inputs)
    y, _ = small_lti.simulate(u)
    return u, y

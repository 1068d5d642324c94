import numpy as np
import pytest

from layerkac.model import Lattice, ModelParams, SpinConfig, build_kernel

M_BETA_2 = 0.9575040240772685        # fixed point of m = tanh(2m)
M_BETA_15 = 0.8585596366401125       # fixed point of m = tanh(1.5m)

# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.ensure_newline()
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def small_params():
    return ModelParams(beta=2.0, gamma=0.3)


@pytest.fixture
def small_kernel(small_params):
    return build_kernel(small_params)


def random_config(lattice: Lattice, rng) -> SpinConfig:
    return SpinConfig.random(lattice, rng)


BC_COMBOS = [
    ("periodic", "periodic"),
    ("plus", "plus"),
    ("minus", "minus"),
    ("plus", "periodic"),
    ("periodic", "mixed-dobrushin"),
]

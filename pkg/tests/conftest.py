import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from quench.grid import Grid, GridFunction  # noqa: E402
from quench.model import ProfileParams, normalized_profile_params, v_profile  # noqa: E402
from quench.rescaled_solver import RescaledConfig, evolve_rescaled  # noqa: E402


@pytest.fixture(scope="session")
def y_grid():
    return Grid(30.0, 1201)


def profile_function(grid, a, b, p):
    return GridFunction(grid, v_profile(ProfileParams(a, b), p, grid.nodes), even=True)


@pytest.fixture(scope="session")
def short_run(y_grid):
    """p = -1, beta = 0.05 profile start, tau in [0, 5]."""
    mu = normalized_profile_params(0.05, -1.0)
    v0 = profile_function(y_grid, mu.a, mu.b, -1.0)
    return evolve_rescaled(v0, RescaledConfig(p=-1.0, tau_max=5.0, sample_stride=50), mu.a, mu.b)


@pytest.fixture(scope="session")
def static_run(y_grid):
    v0 = profile_function(y_grid, 0.5, 0.0, -1.0)
    return evolve_rescaled(v0, RescaledConfig(p=-1.0, tau_max=2.0, sample_stride=100), 0.5, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

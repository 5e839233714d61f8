import numpy as np
import pytest

from snsp.spectral import GridSpec
from snsp.thermodynamics import PressureLaw, RegularizationParams

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


def random_smooth(grid: GridSpec, rng, nmax: int, ncomp: int | None = None) -> np.ndarray:
    """Random real field containing only modes with ``|n|_inf <= nmax``."""
    shape = grid.shape if ncomp is None else (ncomp, *grid.shape)
    a = rng.standard_normal(shape)
    return grid.project(a, nmax) if nmax < grid.M // 2 else a


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid16():
    return GridSpec(16, N=2)


@pytest.fixture
def law2():
    return PressureLaw(a=1.0, gamma=2.0)


@pytest.fixture
def params():
    return RegularizationParams(delta=0.01, Gamma=6.0, eps=0.05, nu_S=0.1, nu_B=0.05, theta=1.0, sigma=1)

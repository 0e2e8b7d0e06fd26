import numpy as np
import pytest

from healthinvest.boundary import covering_h_grid, solve_surface
from healthinvest.params import ModelParams


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def surface(params):
    """Surface covering fixed-h evaluation at h in {2, 1000} over [0, T]."""
    return solve_surface(params, covering_h_grid(params, [2.0, 1000.0]), 100, refine=0)


@pytest.fixture(scope="session")
def surface_sick(params):
    return solve_surface(params, covering_h_grid(params, [2.0, 3.0, 4.0]), 60, refine=0)


@pytest.fixture(scope="session")
def curve_1000(params):
    from healthinvest.boundary import solve_curve
    return solve_curve(params, 1000.0, 60, refine=4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)

import pytest

from lobeq.lob import solve_book_side
from lobeq.model import baseline_config
from lobeq.rbsde import solve_equilibrium


@pytest.fixture(scope="session")
def cfg():
    return baseline_config()


@pytest.fixture(scope="session")
def small_cfg():
    """Coarse grids for tests that run many inner equilibria."""
    return baseline_config(belief_count=50, price_grid_points=200, time_steps=2000)


@pytest.fixture(scope="session")
def paths(cfg):
    return solve_equilibrium(cfg)


@pytest.fixture(scope="session")
def ask_book(cfg, paths):
    return solve_book_side("ask", cfg, float(paths.pa[0]), float(paths.pb[0]))


# one line per acceptance criterion, collected by tests/test_acceptance.py
CRITERIA: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])

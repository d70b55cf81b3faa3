import numpy as np
import pytest

from hodgewave.calculus import Penalties
from hodgewave.fespace import FESpace
from hodgewave.mesh import build_periodic_rect_mesh

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_space():
    """Periodic 4 x 3 mesh of the unit square, r = 1."""
    return FESpace(build_periodic_rect_mesh(4, 3, 1.0, 1.0), 1)


@pytest.fixture(scope="session")
def pen():
    return Penalties(-0.5, 0.7)

import numpy as np
import pytest

from crstokes import boundary_layer as bl
from crstokes.mesh import Rect, build_shishkin, build_uniform

DOMAIN = Rect(-1.0, 1.0, 0.0, 1.0)


@pytest.fixture(scope="session")
def profile():
    return bl.solve_profile(10.0, 1e-10)


@pytest.fixture(scope="session")
def hiemenz(profile):
    """Study parameters: nu = 1e-4, a = 1, P0 = 0."""
    return bl.ExactFields(bl.FlowParams(1e-4, 1.0, 0.0), profile)


@pytest.fixture(scope="session")
def hiemenz_thick(profile):
    return bl.ExactFields(bl.FlowParams(1e-2, 1.0, 0.0), profile)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def small_meshes():
    return [
        build_uniform(Rect(0.0, 1.0, 0.0, 1.0), 1, 1),
        build_uniform(DOMAIN, 4, 2),
        build_uniform(DOMAIN, 6, 3),
        build_shishkin(DOMAIN, 8, 4, 0.1),
        build_shishkin(DOMAIN, 6, 6, 0.024),
    ]


# One line per acceptance criterion, filled by tests/test_acceptance.py and
# repeated in the terminal summary so that it survives output capturing.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

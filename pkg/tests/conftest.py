import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_centered(rng, max_atoms=8):
    """Finite-support law with mean exactly representable-ish at 0, plus its center."""
    k = int(rng.integers(2, max_atoms + 1))
    vals = np.unique(np.round(rng.normal(0, 3, size=k), 3))
    while vals.size < 2:
        vals = np.unique(np.round(rng.normal(0, 3, size=k), 3))
    w = rng.dirichlet(np.ones(vals.size))
    center = float(np.dot(vals, w))
    return vals, w, center


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one verdict line per acceptance criterion for the final summary."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

import numpy as np
import pytest

from privf.dist_core import Alphabet, JointDistribution


def random_prior(rng, n_a, n_b, floor=0.0):
    mass = rng.dirichlet(np.ones(n_a * n_b)).reshape(n_a, n_b) + floor
    return JointDistribution.from_array(mass / mass.sum())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def corr2():
    """The standard correlated binary pair."""
    return JointDistribution.from_array([[0.4, 0.1], [0.1, 0.4]])


#: (criterion, passed, detail) lines filled in by the acceptance suite.
ACCEPTANCE = []


def record(criterion, passed, detail):
    ACCEPTANCE.append((criterion, bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(ACCEPTANCE, key=lambda r: str(r[0])):
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}  {detail}")

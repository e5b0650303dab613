import numpy as np
import pytest

from nvtflow import eos
from nvtflow.grid import Grid, GridSpec

GAS_320 = np.array([7133.9, 26.5])
LIQ_320 = np.array([3513.2, 3814.6])
GAS_330 = np.array([7618.1, 44.5])
LIQ_330 = np.array([3833.6, 3684.3])
BETA = [[0.0, 0.5], [0.5, 0.0]]


def make_mixture(T=320.0, D=1e-6, beta=BETA, k=None, lam=1.0):
    db = eos.load_components()
    comps = [eos.component_from_db(name, db, D) for name in ("CH4", "nC10")]
    return eos.MixtureSpec(comps, T, k=k, beta=beta, lam=lam)


def random_states(mix, count, seed=0):
    """Binary states spanning the gas and liquid densities of the presets, shape (2, count)."""
    rng = np.random.default_rng(seed)
    n1 = rng.uniform(2000.0, 9000.0, count)
    n2 = rng.uniform(10.0, 4500.0, count)
    n = np.stack([n1, n2])
    B = mix.coefficients.b_i @ n
    return n[:, B < 0.95]


@pytest.fixture(scope="session")
def mix320():
    return make_mixture(320.0)


@pytest.fixture(scope="session")
def mix330():
    return make_mixture(330.0)


@pytest.fixture
def grid8():
    return Grid(GridSpec(8, 6, 1.0, 0.75))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)

import numpy as np
import pytest
from hypothesis import settings

from splidar.core import DepthGrid, normalize_irf
from splidar.sim import make_gaussian_irf

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


def toy_irf(n_bins=24, peak=6, width=5, seed=0):
    """Random positive IRF on bins [peak-2, peak-2+width), zero elsewhere."""
    rng = np.random.default_rng(seed)
    raw = np.zeros(n_bins)
    raw[peak - 2:peak - 2 + width] = rng.uniform(0.1, 1.0, width)
    raw[peak] = 2.0
    return normalize_irf(raw)


@pytest.fixture
def small_irf():
    return toy_irf()


@pytest.fixture(scope="session")
def gauss153():
    return make_gaussian_irf(4.0, 20, 153)


@pytest.fixture(scope="session")
def grid153(gauss153):
    return DepthGrid.for_irf(gauss153)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from depthint.grid import DepthGrid

ACCEPTANCE_LINES = []


def smooth_scene(rng, shape, lo=1.0, hi=20.0):
    """Positive depth map built from a tilted plane and a few low-frequency waves."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    logd = rng.uniform(-0.5, 0.5) * xx + rng.uniform(-0.5, 0.5) * yy
    for _ in range(3):
        fx, fy = rng.uniform(0.5, 3.0, 2)
        logd += 0.2 * np.sin(2 * np.pi * (fx * xx + fy * yy) + rng.uniform(0, 2 * np.pi))
    return DepthGrid(np.exp(logd) * rng.uniform(lo, hi))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from slogse.grid import make_grid


@pytest.fixture
def grid1d():
    return make_grid(1, 256, 20.0)


@pytest.fixture
def small_grid():
    return make_grid(1, 64, 20.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

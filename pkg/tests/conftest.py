import numpy as np
import pytest

from stochwave.grid import SpatialGrid
from stochwave.noise import build_noise
from stochwave.wave_profile import nagumo_profile


@pytest.fixture(scope="session")
def grid():
    return SpatialGrid(40.0, 1601)


@pytest.fixture(scope="session")
def profile(grid):
    return nagumo_profile(1.0, 2.0, 0.25, grid)


@pytest.fixture(scope="session")
def profile_c0(grid):
    return nagumo_profile(1.0, 2.0, 0.5, grid)


@pytest.fixture(scope="session")
def noise(profile):
    return build_noise(profile.grid, 64, 0.25, 2.0, basis="1+rho", profile=profile)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

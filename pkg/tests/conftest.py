import numpy as np
import pytest

from models import HeatProblem, SpectralGrid
from spectral_core import CoefVec


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def worked_problem():
    """N=64, T=1, gamma=1 on the Laplacian spectrum."""
    return HeatProblem.default()


@pytest.fixture
def small_problem():
    # mild horizon so every mode of the backward map stays finite
    return HeatProblem(grid=SpectralGrid.laplacian(8), horizon=0.05, gamma=1.0)


@pytest.fixture
def random_vec(rng):
    def make(grid, scale=1.0):
        return CoefVec(grid, scale * rng.standard_normal(grid.n_modes))
    return make

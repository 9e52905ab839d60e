import numpy as np
import pytest

from fluorosense.spectral import EmissionModel, default_grid


@pytest.fixture(scope="session")
def grid():
    return default_grid()


@pytest.fixture(scope="session")
def emission():
    return EmissionModel()


@pytest.fixture()
def rng():
    return np.random.default_rng(20260819)

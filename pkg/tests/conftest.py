import numpy as np
import pytest

from nopair.nonrel import optimize_basis
from nopair.system import preset


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def he_basis():
    basis, _ = optimize_basis(preset("he"), 12, seed=5, refine_cycles=1, max_evals=40)
    return basis


@pytest.fixture(scope="session")
def h2_basis():
    basis, _ = optimize_basis(preset("h2"), 10, seed=5, refine_cycles=1, max_evals=40)
    return basis

import numpy as np
import pytest

from carnot_gmt import algebra as ca
from carnot_gmt import homnorm as hn


@pytest.fixture(scope="session")
def h1():
    return ca.heisenberg(1)


@pytest.fixture(scope="session")
def koranyi(h1):
    return hn.HomogeneousNorm(h1, kind="koranyi")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

import numpy as np
import pytest

from clusterssd.numerics import QuadratureRule


@pytest.fixture(scope="session")
def rule30():
    return QuadratureRule.gauss_hermite(30)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)

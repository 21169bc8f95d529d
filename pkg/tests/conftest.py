import numpy as np
import pytest

from glset import build_model


@pytest.fixture(scope="session")
def iid3():
    return build_model(("iid_gaussian", 3))


@pytest.fixture(scope="session")
def iid5():
    return build_model(("iid_gaussian", 5))


@pytest.fixture(scope="session")
def kl8():
    return build_model(("kl_brownian", 8))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260808)

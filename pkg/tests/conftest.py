import numpy as np
import pytest

import dimlab as dl


@pytest.fixture(scope="session")
def carpet():
    return dl.load_ifs("sierpinski_carpet")


@pytest.fixture(scope="session")
def square():
    return dl.load_ifs("unit_square")


@pytest.fixture(scope="session")
def triangle():
    return dl.load_ifs("sierpinski_triangle")


@pytest.fixture(scope="session")
def rot3():
    return dl.load_ifs("rotational_m3")


@pytest.fixture(scope="session")
def cantor_interval():
    return dl.load_ifs("product_cantor_interval")


@pytest.fixture(scope="session")
def gasket_1d():
    return dl.load_ifs("sierpinski_1d")


@pytest.fixture
def rng_np():
    return np.random.Generator(np.random.PCG64(20240817))

import numpy as np
import pytest

from brownflight import decompose, make_domain


@pytest.fixture(scope="session")
def square_domain():
    return make_domain({"type": "square", "side": 1.0})


@pytest.fixture(scope="session")
def square_dec8(square_domain):
    return decompose(square_domain, -8)


@pytest.fixture(scope="session")
def disk_domain():
    return make_domain({"type": "disk", "radius": 1.0})


@pytest.fixture(scope="session")
def disk_dec8(disk_domain):
    return decompose(disk_domain, -8)


@pytest.fixture(scope="session")
def koch5_domain():
    return make_domain({"type": "koch_snowflake", "generation": 5, "side": 1.0})


@pytest.fixture(scope="session")
def koch5_dec8(koch5_domain):
    return decompose(koch5_domain, -8)


@pytest.fixture(scope="session")
def box3d_domain():
    return make_domain({"type": "box3d", "a": 1.0, "b": 1.0, "c": 1.0})


@pytest.fixture(scope="session")
def box3d_dec5(box3d_domain):
    return decompose(box3d_domain, -5)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260808)

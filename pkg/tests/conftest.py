import numpy as np
import pytest

from amlattice.units import reference_config


@pytest.fixture(scope="session")
def cfg10():
    return reference_config(10.0, 1, 0.2)


@pytest.fixture(scope="session")
def cfg11():
    return reference_config(11.2, 1, 0.23)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

import pytest

from phantoms import make_phantom


@pytest.fixture
def phantom():
    return make_phantom()


@pytest.fixture
def phantom_pair():
    return make_phantom(seed=1), make_phantom(seed=2)

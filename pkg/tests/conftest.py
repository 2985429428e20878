import numpy as np
import pytest

from _catalog import IDS, instance


@pytest.fixture(params=IDS)
def catalog_case(request):
    return request.param, instance(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

import numpy as np
import pytest

from swinfsr.nn import make_rng
from swinfsr.tensor import default_dtype


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def f64():
    with default_dtype(np.float64):
        yield

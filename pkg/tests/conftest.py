import numpy as np
import pytest
from hypothesis import strategies as st

from nzpc.data import PlantDimensions
from nzpc.sets import Zonotope

CSTR_H = np.array([[1.0, 0.001], [-0.01, 1.0]])


@pytest.fixture
def cstr_dims():
    return PlantDimensions(2, 2, 2, CSTR_H, 22.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def finite(lo=-10.0, hi=10.0):
    return st.floats(lo, hi, allow_nan=False, allow_infinity=False)


@st.composite
def zonotopes(draw, dim=None, max_gens=4):
    n = dim if dim is not None else draw(st.integers(1, 3))
    g = draw(st.integers(0, max_gens))
    c = draw(st.lists(finite(), min_size=n, max_size=n))
    gens = draw(st.lists(finite(-3, 3), min_size=n * g, max_size=n * g))
    return Zonotope(c, np.array(gens).reshape(n, g))


@st.composite
def zonotope_pairs(draw):
    n = draw(st.integers(1, 3))
    return draw(zonotopes(dim=n)), draw(zonotopes(dim=n))


def member(z, beta):
    return z.center + z.generators @ np.asarray(beta)

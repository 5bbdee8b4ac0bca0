"""
Shared fixtures: the worked dyadic systems and their closed-form fields
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from src.core.fields import make_coordinate_polynomial
from src.core.geometry import IndexShape
from src.dynamics.ifs import make_padic
from src.dynamics.mw_operator import MWOperator

CONFIG_DIR = Path(__file__).parent / "configs"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def dyadic_line():
    return make_padic(IndexShape(1, 1), 2)


@pytest.fixture
def dyadic_product():
    return make_padic(IndexShape(2, 1), 2)


@pytest.fixture
def dyadic_plane():
    return make_padic(IndexShape(1, 2), 2)


@pytest.fixture
def triadic_line():
    return make_padic(IndexShape(1, 1), 3)


@pytest.fixture
def square():
    """f(x) = x^2 on the line"""
    return make_coordinate_polynomial(IndexShape(1, 1), [1.0], [[[2]]], gradient_lipschitz=2.0)


@pytest.fixture
def square_times_linear():
    """f(x1, x2) = x1^2 x2, whose mixed partial is 2 x1"""
    return make_coordinate_polynomial(IndexShape(2, 1), [1.0], [[[2], [1]]], gradient_lipschitz=2.0)


@pytest.fixture
def line_operator(dyadic_line):
    return MWOperator(dyadic_line)


@pytest.fixture
def config_dir():
    return CONFIG_DIR

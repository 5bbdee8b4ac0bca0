#!/usr/bin/env python3
"""
Tests for scalar fields, their partials and restrictions
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project to path
sys.path.insert(0, str(Path(__file__).parent))

from src.core.fields import (
    Smoothness, constant_field, make_coordinate_polynomial, make_custom_expression,
    make_multilinear, make_product_sine, restrict
)
from src.core.geometry import IndexShape, MultilinearForm
from src.core.gradient import _finite_difference, n_gradient
from src.utils.errors import ConfigurationError, ShapeMismatchError
from src.utils.logger import setup_logging

logger = setup_logging()


def test_multilinear_product():
    f = make_multilinear(MultilinearForm.from_flat([1.0], IndexShape(2, 1)))
    assert f([[2.0], [3.0]]) == 6.0
    assert f.smoothness == Smoothness.ANALYTIC


def test_multilinear_zero_form():
    f = make_multilinear(MultilinearForm.zeros(IndexShape(2, 2)))
    points = np.random.default_rng(0).random((5, 2, 2))
    np.testing.assert_array_equal(f.evaluate(points), np.zeros(5))


def test_multilinear_linear_functional():
    f = make_multilinear(MultilinearForm([2.0, -3.0]))
    assert f([[1.5, 0.5]]) == pytest.approx(2.0 * 1.5 - 3.0 * 0.5)


def test_evaluate_is_batched():
    f = make_coordinate_polynomial(IndexShape(2, 1), [1.0], [[[2], [1]]])
    points = np.array([[[1.0], [2.0]], [[3.0], [1.0]]])
    np.testing.assert_allclose(f.evaluate(points), [2.0, 9.0])


def test_evaluate_rejects_wrong_shape():
    f = constant_field(IndexShape(2, 1), 1.0)
    with pytest.raises(ShapeMismatchError):
        f.evaluate(np.zeros((3, 1, 1)))


def test_polynomial_exact_partial():
    # f = x1^2 x2 + 3 x1, d/dx1 d/dx2 f = 2 x1
    f = make_coordinate_polynomial(IndexShape(2, 1), [1.0, 3.0], [[[2], [1]], [[1], [0]]])
    assert float(f.exact_partial((0, 0), np.array([[0.7], [0.2]]))) == pytest.approx(1.4)


def test_polynomial_rejects_negative_exponents():
    with pytest.raises(ShapeMismatchError):
        make_coordinate_polynomial(IndexShape(1, 1), [1.0], [[[-1]]])


@pytest.mark.parametrize("field_factory", [
    lambda: make_coordinate_polynomial(
        IndexShape(2, 2), [1.0, -0.5], [[[2, 1], [1, 3]], [[1, 0], [0, 2]]]
    ),
    lambda: make_product_sine(IndexShape(2, 1), [1.3, 2.1], [0.2, 0.1], 1.5),
    lambda: make_product_sine(IndexShape(1, 2), [0.9, 1.7]),
    lambda: make_multilinear(MultilinearForm(np.arange(4.0).reshape(2, 2))),
])
def test_exact_partials_match_finite_differences(field_factory):
    f = field_factory()
    points = np.random.default_rng(11).random((20,) + f.shape.dims)
    for k in f.shape.multi_indices():
        exact = f.exact_partial(k, points)
        approx = _finite_difference(f, k, points)
        np.testing.assert_allclose(approx, exact, rtol=1e-6, atol=1e-6)


def test_n_gradient_recovers_form():
    form = MultilinearForm(np.array([[1.0, -2.0], [0.5, 4.0]]))
    f = make_multilinear(form)
    assert n_gradient(f, [[0.3, 0.9], [0.2, 0.1]]).allclose(form)


def test_linear_combination_keeps_structure():
    shape = IndexShape(2, 1)
    a = make_multilinear(MultilinearForm.from_flat([2.0], shape))
    b = make_multilinear(MultilinearForm.from_flat([5.0], shape))
    combined = 3.0 * a - b
    assert combined.form.allclose(MultilinearForm.from_flat([1.0], shape))
    assert combined([[1.0], [2.0]]) == pytest.approx(2.0)
    assert combined.gradient_lipschitz == 0.0


def test_combination_with_black_box_is_black_box():
    shape = IndexShape(1, 1)
    f = make_custom_expression(shape, "x**2") + constant_field(shape, 1.0)
    assert f.smoothness == Smoothness.BLACK_BOX
    assert not f.has_exact_partial


def test_custom_expression_names():
    f = make_custom_expression(IndexShape(2, 2), "x1_1 * x2_2 + sin(x1_2)")
    x = np.array([[0.5, 0.0], [0.0, 4.0]])
    assert f(x) == pytest.approx(2.0)
    g = make_custom_expression(IndexShape(2, 1), "x1 * x2**2")
    assert g([[2.0], [3.0]]) == pytest.approx(18.0)


def test_custom_expression_constant_broadcasts():
    f = make_custom_expression(IndexShape(1, 1), "7")
    np.testing.assert_array_equal(f.evaluate(np.zeros((4, 1, 1))), np.full(4, 7.0))


@pytest.mark.parametrize("expression", ["x1 +* 2", "y * x1"])
def test_custom_expression_errors(expression):
    with pytest.raises(ConfigurationError):
        make_custom_expression(IndexShape(2, 1), expression)


def test_restrict_to_square():
    f = make_coordinate_polynomial(IndexShape(2, 1), [1.0], [[[2], [1]]])
    g = restrict(f, {1: [1.0]})
    assert g.shape == IndexShape(1, 1)
    assert g([[3.0]]) == pytest.approx(9.0)


def test_restrict_agrees_with_merged_point():
    f = make_product_sine(IndexShape(3, 2), np.linspace(0.5, 2.0, 6))
    g = restrict(f, {0: [0.2, 0.4], 2: [0.6, 0.8]})
    y = np.array([[0.1, 0.3]])
    merged = np.array([[0.2, 0.4], [0.1, 0.3], [0.6, 0.8]])
    assert g(y) == pytest.approx(f(merged))


def test_restrict_of_multilinear_is_multilinear():
    form = MultilinearForm(np.arange(1.0, 9.0).reshape(2, 2, 2))
    f = make_multilinear(form)
    g = restrict(f, {1: [2.0, -1.0]})
    assert g.is_multilinear
    y = np.array([[0.3, 0.7], [1.1, -0.4]])
    merged = np.array([[0.3, 0.7], [2.0, -1.0], [1.1, -0.4]])
    assert g(y) == pytest.approx(f(merged))


@pytest.mark.parametrize("fixed", [{}, {0: [1.0], 1: [2.0]}, {5: [1.0]}])
def test_restrict_rejects_bad_assignments(fixed):
    f = make_multilinear(MultilinearForm.from_flat([1.0], IndexShape(2, 1)))
    with pytest.raises(ShapeMismatchError):
        restrict(f, fixed)

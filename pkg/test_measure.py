#!/usr/bin/env python3
"""
Tests for distribution measures, g_gamma, pushforwards, invariance checks and orbits
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project to path
sys.path.insert(0, str(Path(__file__).parent))

from src.core.geometry import IndexShape
from src.dynamics.ifs import make_padic
from src.dynamics.measure import (
    absolute_continuity_bound, box_measure, box_measure_many, cell_labels, check_distribution,
    check_invariance, expression_measure, g_gamma, g_gamma_many, lebesgue_measure,
    power_measure, pushforward_by_boxes, pushforward_consistency, pushforward_distribution,
    simulate_orbit, zero_measure
)
from src.models.report import InvarianceMethod
from src.utils.errors import OrderError, OutsideTileError, ShapeMismatchError
from src.utils.logger import setup_logging

logger = setup_logging()

GRID = np.linspace(0.0, 1.0, 21).reshape(-1, 1, 1)


def test_lebesgue_box_measures():
    nu = lebesgue_measure(2)
    assert box_measure(nu, [[0.2], [0.1]], [[0.5], [0.4]]) == pytest.approx(0.09)
    assert box_measure(power_measure(1, [2]), [[0.5]], [[1.0]]) == pytest.approx(0.75)


def test_degenerate_box_has_no_mass():
    nu = power_measure(2, [2, 3])
    assert box_measure(nu, [[0.3], [0.6]], [[0.3], [0.9]]) == 0.0


def test_box_measure_needs_ordered_corners():
    with pytest.raises(OrderError):
        box_measure(lebesgue_measure(2), [[0.5], [0.2]], [[0.4], [0.9]])
    with pytest.raises(OrderError):
        box_measure_many(lebesgue_measure(1), np.array([[[-0.1]]]), np.array([[[0.5]]]))


def test_box_measure_is_additive_on_splits():
    nu = power_measure(2, [2, 3])
    a, b = np.array([[0.1], [0.2]]), np.array([[0.9], [0.7]])
    mid = a.copy()
    mid[0, 0] = 0.45
    upper = b.copy()
    upper[0, 0] = 0.45
    whole = box_measure(nu, a, b)
    assert box_measure(nu, a, upper) + box_measure(nu, mid, b) == pytest.approx(whole, abs=1e-14)


def test_power_measure_validates_exponents():
    with pytest.raises(ShapeMismatchError):
        power_measure(2, [2])
    with pytest.raises(ShapeMismatchError):
        power_measure(1, [0])


def test_distribution_sanity(dyadic_product, dyadic_line):
    assert check_distribution(power_measure(2, [2, 1]), dyadic_product.tile).passed
    shifted = check_distribution(expression_measure(1, "x - 0.5"), dyadic_line.tile)
    assert not shifted.passed
    assert shifted.value_at_origin == pytest.approx(-0.5)


@pytest.mark.parametrize("nu,expected", [
    (lebesgue_measure(2), 1.0),
    (power_measure(1, [2]), 2.0),
    (zero_measure(1), 0.0),
])
def test_absolute_continuity_constant(nu, expected):
    ifs = make_padic(nu.shape, 2)
    constant, violation = absolute_continuity_bound(nu, ifs.tile)
    assert constant == pytest.approx(expected, abs=1e-9)
    assert violation <= 1e-12


@pytest.mark.parametrize("x,image,cell", [(0.3, 0.6, 0), (0.75, 0.5, 1), (0.5, 0.0, 1), (0.0, 0.0, 0)])
def test_g_gamma_doubling(dyadic_line, x, image, cell):
    point, index = g_gamma(dyadic_line, [[x]])
    assert point.values[0, 0] == pytest.approx(image)
    assert index == cell


def test_g_gamma_off_every_cell(dyadic_line):
    point, index = g_gamma(dyadic_line, [[1.0]])
    assert index is None
    assert point.values[0, 0] == 0.0


def test_g_gamma_triadic(triadic_line):
    x = np.array([0.1, 0.4, 0.5, 0.9])
    images, cells = g_gamma_many(triadic_line, x.reshape(-1, 1, 1))
    np.testing.assert_allclose(images.ravel(), np.mod(3 * x, 1.0), atol=1e-12)
    np.testing.assert_array_equal(cells, [0, 1, 1, 2])


def test_g_gamma_inverts_each_map(rng, dyadic_product):
    points = rng.random((30, 2, 1)) * 0.999
    for i, m in enumerate(dyadic_product.maps):
        images, cells = g_gamma_many(dyadic_product, m.apply(points))
        np.testing.assert_array_equal(cells, np.full(30, i))
        np.testing.assert_allclose(images, points, atol=1e-12)


def test_g_gamma_rejects_points_outside_tile(dyadic_line):
    with pytest.raises(OutsideTileError):
        g_gamma(dyadic_line, [[1.5]])


def test_pushforward_of_lebesgue_is_lebesgue(dyadic_product, rng):
    pushed = pushforward_distribution(dyadic_product, lebesgue_measure(2))
    points = rng.random((20, 2, 1))
    np.testing.assert_allclose(pushed.d.evaluate(points), np.prod(points, axis=(-2, -1)), atol=1e-12)


def test_pushforward_of_square(dyadic_line):
    pushed = pushforward_distribution(dyadic_line, power_measure(1, [2]))
    x = GRID.ravel()
    np.testing.assert_allclose(pushed.d.evaluate(GRID), x ** 2 / 2 + x / 2, atol=1e-12)


def test_pushforward_of_zero(dyadic_line):
    pushed = pushforward_distribution(dyadic_line, zero_measure(1))
    assert np.all(pushed.d.evaluate(GRID) == 0.0)


def test_pushforward_rejects_mismatched_shapes(dyadic_line):
    with pytest.raises(ShapeMismatchError):
        pushforward_distribution(dyadic_line, lebesgue_measure(2))


def test_pushforward_by_boxes_matches_operator(dyadic_product, rng):
    nu = power_measure(2, [2, 3])
    assert pushforward_consistency(dyadic_product, nu, rng.random((15, 2, 1))) <= 1e-10
    a, b = [[0.1], [0.2]], [[0.6], [0.9]]
    pushed = pushforward_distribution(dyadic_product, nu)
    via_increment = box_measure(pushed, a, b)
    assert pushforward_by_boxes(dyadic_product, nu, a, b) == pytest.approx(via_increment, abs=1e-12)


def test_lebesgue_is_invariant(dyadic_product):
    report = check_invariance(dyadic_product, lebesgue_measure(2), samples=500, grid=6, depth=4)
    assert report.invariant and report.consistent
    assert len(report.verdicts) == 3
    form = next(v for v in report.verdicts if v.method == InvarianceMethod.MULTILINEAR_FORM.value)
    assert form.details["lambda"] == pytest.approx(1.0, abs=1e-10)
    assert report.sanity.passed


def test_square_distribution_is_not_invariant(dyadic_line):
    report = check_invariance(dyadic_line, power_measure(1, [2]), samples=500, depth=8)
    assert not report.invariant
    assert report.consistent
    fixed = next(v for v in report.verdicts if v.method == InvarianceMethod.FIXED_POINT.value)
    assert fixed.residual == pytest.approx(0.125, abs=1e-12)
    assert fixed.worst_location == [0.5]


def test_zero_measure_is_trivially_invariant(triadic_line):
    report = check_invariance(triadic_line, zero_measure(1), samples=200)
    assert report.invariant
    form = next(v for v in report.verdicts if v.method == InvarianceMethod.MULTILINEAR_FORM.value)
    assert form.details["lambda"] == 0.0


def test_invariance_single_method(dyadic_line):
    report = check_invariance(dyadic_line, lebesgue_measure(1), methods=["pushforward_boxes"], samples=300)
    assert [v.method for v in report.verdicts] == ["pushforward_boxes"]
    assert report.invariant


def test_orbit_from_origin_stays_put(dyadic_line):
    stats = simulate_orbit(dyadic_line, [[0.0]], 10, grid=8)
    assert stats.frequencies[0] == 1.0
    assert sum(stats.frequencies) == pytest.approx(1.0)
    assert stats.escaped == 0


def test_exact_orbit_of_a_tenth_cycles(dyadic_line):
    # 1/10 -> 1/5 -> 2/5 -> 4/5 -> 3/5 -> 1/5 under doubling
    stats = simulate_orbit(dyadic_line, [[0.1]], 1001, grid=8)
    freq = np.array(stats.frequencies)
    assert freq[0] == pytest.approx(1 / 1001)
    for cell in (1, 3, 4, 6):
        assert freq[cell] == pytest.approx(0.25, abs=1e-3)


def test_float_orbit_collapses(dyadic_line):
    stats = simulate_orbit(dyadic_line, [[0.1]], 1000, grid=8, arithmetic="float")
    assert stats.frequencies[0] >= 0.9
    assert stats.arithmetic == "float"


def test_orbit_trajectory_limit(dyadic_line):
    stats = simulate_orbit(dyadic_line, [[0.3]], 50, trajectory_limit=5)
    assert len(stats.trajectory) == 5
    assert stats.trajectory[0] == [0.3]


def test_orbit_rejects_bad_arguments(dyadic_line):
    with pytest.raises(OutsideTileError):
        simulate_orbit(dyadic_line, [[2.0]], 10)
    with pytest.raises(ValueError):
        simulate_orbit(dyadic_line, [[0.3]], 10, arithmetic="interval")
    with pytest.raises(ValueError):
        simulate_orbit(dyadic_line, [[0.3]], -1)


def test_cell_labels_order():
    assert cell_labels(2, 2) == [(0, 0), (0, 1), (1, 0), (1, 1)]


@pytest.mark.slow
def test_long_orbit_equidistributes(dyadic_line):
    # k / 5^7 for k prime to 5 is a single doubling cycle, close to uniform on [0, 1)
    stats = simulate_orbit(dyadic_line, [[0.1234567]], 200_000, grid=8, trajectory_limit=0)
    np.testing.assert_allclose(stats.frequencies, np.full(8, 1 / 8), atol=0.01)


@pytest.mark.slow
def test_product_orbit_has_uniform_marginals():
    ifs = make_padic(IndexShape(2, 1), 3)
    stats = simulate_orbit(ifs, [[0.1234567], [0.7654321]], 100_000, grid=3, trajectory_limit=0)
    assert stats.escaped == 0
    assert stats.cell_shape == [3, 3]
    joint = np.array(stats.frequencies).reshape(stats.cell_shape)
    np.testing.assert_allclose(joint.sum(axis=1), np.full(3, 1 / 3), atol=0.01)
    np.testing.assert_allclose(joint.sum(axis=0), np.full(3, 1 / 3), atol=0.01)


def test_product_orbit_cells_follow_labels():
    ifs = make_padic(IndexShape(2, 1), 3)
    # digits of 1/2 and 1/4 in base 3 are 1111... and 0202...
    stats = simulate_orbit(ifs, [[0.5], [0.25]], 4, grid=3)
    labels = cell_labels(3, 2)
    visited = [labels[j] for j, freq in enumerate(stats.frequencies) if freq > 0]
    assert visited == [(1, 0), (1, 2)]
    assert stats.frequencies[labels.index((1, 0))] == pytest.approx(0.5)

#!/usr/bin/env python3
"""
Tests for points, corners, boxes and multilinear forms
"""
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

# Add project to path
sys.path.insert(0, str(Path(__file__).parent))

from src.core.geometry import (
    Box, BoxKind, CornerMask, IndexShape, MultilinearForm, Point,
    corner_points, corner_set, eval_form, group_norm_product,
    precedes, select_corner, substitute_axis
)
from src.utils.errors import OrderError, ShapeMismatchError
from src.utils.logger import setup_logging

logger = setup_logging()


def _point(*values, s=1):
    return Point(np.asarray(values, dtype=float).reshape(-1, s))


def test_index_shape_cardinalities():
    shape = IndexShape(3, 2)
    assert shape.size == 6
    assert shape.n_multi_indices == 8
    assert shape.n_corners == 8
    assert shape.multi_indices()[:3] == [(0, 0, 0), (0, 0, 1), (0, 1, 0)]


@pytest.mark.parametrize("r,s", [(0, 1), (1, 0), (-2, 3)])
def test_index_shape_rejects_empty(r, s):
    with pytest.raises(ShapeMismatchError):
        IndexShape(r, s)


def test_point_rejects_non_finite():
    with pytest.raises(ValueError):
        Point([[np.nan]])
    with pytest.raises(ValueError):
        Point([[1.0], [np.inf]])


def test_select_corner_extremes_r1():
    x, y = _point(2.0), _point(5.0)
    assert select_corner(x, y, CornerMask(1, 1)) == x
    assert select_corner(x, y, CornerMask(0, 1)) == y


def test_select_corner_picks_groups():
    x, y = _point(0.0, 0.0), _point(1.0, 1.0)
    # M = {first group}
    assert select_corner(x, y, CornerMask.from_members([0], 2)) == _point(0.0, 1.0)


def test_select_corner_complement_symmetry():
    rng = np.random.default_rng(7)
    x = Point(rng.random((3, 2)))
    y = Point(rng.random((3, 2)))
    for bits in range(8):
        mask = CornerMask(bits, 3)
        assert select_corner(x, y, mask) == select_corner(y, x, mask.complement())


def test_select_corner_idempotent():
    x = _point(0.3, 0.7)
    for bits in range(4):
        assert select_corner(x, x, CornerMask(bits, 2)) == x


def test_select_corner_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        select_corner(_point(1.0), _point(1.0, 2.0), CornerMask(0, 1))


def test_corner_set_unit_square():
    corners = corner_set(_point(0.0, 0.0), _point(1.0, 1.0))
    assert [mask.bits for mask, _ in corners] == [0, 1, 2, 3]
    assert [c.flat().tolist() for _, c in corners] == [[1, 1], [0, 1], [1, 0], [0, 0]]


def test_corner_set_r3_distinct():
    corners = corner_set(_point(0.0, 0.0, 0.0), _point(1.0, 2.0, 3.0))
    assert len(corners) == 8
    assert len({c for _, c in corners}) == 8


def test_corner_points_matches_corner_set():
    rng = np.random.default_rng(3)
    x, y = rng.random((2, 3, 2))
    batched = corner_points(x[None], y[None])[0]
    for (mask, corner), row in zip(corner_set(Point(x), Point(y)), batched):
        np.testing.assert_array_equal(corner.values, row)


def test_corner_signs_from_popcount():
    assert [m.sign for m, _ in corner_set(_point(0, 0), _point(1, 1))] == [1.0, -1.0, -1.0, 1.0]


def test_eval_form_examples():
    assert eval_form(MultilinearForm.from_flat([3.0], IndexShape(2, 1)), _point(2.0, 5.0)) == 30.0
    dot = MultilinearForm([1.0, -1.0])
    assert eval_form(dot, Point([[4.0, 7.0]])) == -3.0
    assert eval_form(MultilinearForm.from_flat([2.5], IndexShape(3, 1)), _point(1.0, 0.0, 4.0)) == 0.0


def test_eval_form_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        eval_form(MultilinearForm([1.0, 2.0]), _point(1.0, 2.0))


def test_group_norm_product_examples():
    assert group_norm_product(_point(3.0, 4.0)) == 12.0
    assert group_norm_product(Point([[3.0, 4.0]])) == 5.0
    assert group_norm_product(Point([[0.0, 0.0], [1.0, 1.0]])) == 0.0


def test_substitute_axis():
    x = _point(0.0, 0.0)
    assert substitute_axis(x, 1, [1.0]) == _point(0.0, 1.0)
    assert substitute_axis(x, 0, x.group(0)) == x
    with pytest.raises(ShapeMismatchError):
        substitute_axis(x, 2, [1.0])


def test_substitute_every_axis_yields_other_point():
    x, y = _point(0.1, 0.2, 0.3), _point(0.9, 0.8, 0.7)
    z = x
    for m in range(3):
        z = substitute_axis(z, m, y.group(m))
    assert z == y


def test_precedes():
    assert precedes([[0.2], [0.5]], [[0.2], [1.0]])
    assert not precedes([[0.2], [0.5]], [[0.2], [1.0]], strict=True)
    assert not precedes([[-0.1]], [[1.0]])


def test_box_geometry():
    box = Box(_point(0.1, 0.2), _point(0.4, 0.5), BoxKind.HALF_OPEN)
    assert box.volume == pytest.approx(0.09)
    assert box.diameter == pytest.approx(np.sqrt(0.18))
    inside = box.contains(np.array([[[0.1], [0.2]], [[0.4], [0.3]]]))
    assert inside.tolist() == [True, False]
    with pytest.raises(OrderError):
        Box(_point(1.0), _point(0.0))


@hyp_settings(max_examples=60, deadline=None)
@given(
    r=st.integers(min_value=1, max_value=3),
    s=st.integers(min_value=1, max_value=3),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    t=st.floats(min_value=-5.0, max_value=5.0, allow_nan=False),
)
def test_form_is_separately_linear(r, s, seed, t):
    rng = np.random.default_rng(seed)
    shape = IndexShape(r, s)
    form = MultilinearForm(rng.normal(size=(s,) * r))
    u = rng.normal(size=shape.dims)
    n = int(rng.integers(r))
    scaled = u.copy()
    scaled[n] *= t
    assert eval_form(form, scaled) == pytest.approx(t * eval_form(form, u), rel=1e-9, abs=1e-9)


@hyp_settings(max_examples=100, deadline=None)
@given(
    r=st.integers(min_value=1, max_value=4),
    s=st.integers(min_value=1, max_value=3),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_cauchy_schwarz_for_forms(r, s, seed):
    rng = np.random.default_rng(seed)
    shape = IndexShape(r, s)
    form = MultilinearForm(rng.normal(size=(s,) * r))
    u = rng.normal(size=shape.dims)
    assert abs(eval_form(form, u)) <= form.norm() * group_norm_product(u) * (1 + 1e-12) + 1e-12

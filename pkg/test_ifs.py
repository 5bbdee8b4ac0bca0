#!/usr/bin/env python3
"""
Tests for affine IFS construction, word algebra, admissible sets and hypothesis checks
"""
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

# Add project to path
sys.path.insert(0, str(Path(__file__).parent))

from src.core.geometry import IndexShape
from src.dynamics.ifs import (
    AffineIFS, AffineMap, Tile, cell_diameter_bound, compose, dedup_points,
    enumerate_words, make_explicit, make_padic, minimal_admissible_points,
    validate_hypotheses, word_arrays
)
from src.utils.errors import BudgetExceededError, ConfigurationError, ShapeMismatchError
from src.utils.logger import setup_logging

logger = setup_logging()


def test_padic_dyadic_line(dyadic_line):
    assert dyadic_line.size == 2
    assert dyadic_line.q == 0.5
    np.testing.assert_array_equal(dyadic_line.anchors.ravel(), [0.0, 0.5])
    assert dyadic_line.tile.volume == 1.0


def test_padic_product_beta_sum(dyadic_product):
    assert dyadic_product.size == 4
    np.testing.assert_array_equal(dyadic_product.betas, np.full(4, 0.25))
    assert dyadic_product.beta_sum == 1.0


def test_padic_plane_weights(dyadic_plane):
    # four maps, each halving the single group: operator weights 1/2, cell masses 1/4
    assert dyadic_plane.beta_sum == 2.0
    assert dyadic_plane.volume_sum == 1.0


def test_padic_rejects_small_base():
    with pytest.raises(ConfigurationError):
        make_padic(IndexShape(1, 1), 1)


def test_ifs_needs_two_maps():
    shape = IndexShape(1, 1)
    with pytest.raises(ConfigurationError):
        AffineIFS(shape, [AffineMap([0.5], [[0.0]])], Tile.unit(shape))


def test_ifs_rejects_mismatched_map():
    shape = IndexShape(1, 1)
    maps = [AffineMap([0.5], [[0.0]]), AffineMap([0.5, 0.5], [[0.0], [0.5]])]
    with pytest.raises(ShapeMismatchError):
        AffineIFS(shape, maps, Tile.unit(shape))


def test_affine_map_rejects_nonpositive_scalar():
    with pytest.raises(ConfigurationError):
        AffineMap([0.0], [[0.0]])


def test_affine_map_inverse():
    m = AffineMap([0.25, 0.5], [[0.1, 0.2], [0.3, 0.4]])
    x = np.array([[0.7, 0.2], [0.9, 0.1]])
    np.testing.assert_allclose(m.inverse(m.apply(x)), x, atol=1e-15)


def test_explicit_box_volume_must_match():
    with pytest.raises(ConfigurationError):
        make_explicit(IndexShape(1, 1), [([0.5], [0.0]), ([0.5], [0.5])], [0.0], [1.0], volume=0.5)


def test_compose_empty_word_is_identity(dyadic_product):
    identity = compose(dyadic_product, ())
    np.testing.assert_array_equal(identity.alpha, [1.0, 1.0])
    np.testing.assert_array_equal(identity.anchor, np.zeros((2, 1)))
    assert identity.beta == 1.0


def test_compose_two_letters(dyadic_line):
    composed = compose(dyadic_line, (1, 0))
    assert composed.anchor[0, 0] == 0.5
    assert composed.alpha[0] == 0.25
    # gamma^1(gamma^0(x)) = (x/2 + 1)/2
    assert composed.apply(np.array([[0.4]]))[0, 0] == pytest.approx(0.6)


def test_compose_rejects_bad_index(dyadic_line):
    with pytest.raises(ConfigurationError):
        compose(dyadic_line, (0, 2))


@hyp_settings(max_examples=50, deadline=None)
@given(
    first=st.lists(st.integers(min_value=0, max_value=8), max_size=3),
    second=st.lists(st.integers(min_value=0, max_value=8), max_size=3),
)
def test_compose_is_a_homomorphism(first, second):
    ifs = make_padic(IndexShape(2, 1), 3)
    joined = compose(ifs, tuple(first) + tuple(second))
    chained = compose(ifs, tuple(first)).then(compose(ifs, tuple(second)))
    assert joined.word == chained.word
    np.testing.assert_allclose(joined.alpha, chained.alpha, rtol=1e-15)
    np.testing.assert_allclose(joined.anchor, chained.anchor, atol=1e-15)


def test_enumerate_words_dyadic_anchors(dyadic_line):
    words = list(enumerate_words(dyadic_line, 3))
    assert len(words) == 8
    assert [w.word for w in words][:3] == [(0, 0, 0), (0, 0, 1), (0, 1, 0)]
    np.testing.assert_array_equal([w.anchor[0, 0] for w in words], np.arange(8) / 8)


def test_enumerate_words_depth_zero(dyadic_line):
    words = list(enumerate_words(dyadic_line, 0))
    assert len(words) == 1
    assert words[0].word == ()


@pytest.mark.parametrize("p", [1, 2, 4])
def test_word_betas_sum_to_one(dyadic_product, p):
    assert np.sum(word_arrays(dyadic_product, p).betas) == pytest.approx(1.0, abs=1e-10)


def test_word_arrays_match_enumeration():
    ifs = make_padic(IndexShape(1, 2), 3)
    table = word_arrays(ifs, 2)
    for row, word in enumerate(enumerate_words(ifs, 2)):
        np.testing.assert_allclose(table.anchors[row], word.anchor, atol=1e-15)
        np.testing.assert_allclose(table.alphas[row], word.alpha, rtol=1e-15)


def test_padic_anchors_are_exact_grid(triadic_line):
    anchors = word_arrays(triadic_line, 3).anchors.ravel()
    exact = sorted(Fraction(float(a)).limit_denominator(27) for a in anchors)
    assert exact == [Fraction(j, 27) for j in range(27)]


def test_word_budget(dyadic_line):
    with pytest.raises(BudgetExceededError) as excinfo:
        list(enumerate_words(dyadic_line, 12, budget=1000))
    assert excinfo.value.requested == 4096
    with pytest.raises(BudgetExceededError):
        word_arrays(dyadic_line, 12, budget=1000)


def test_cell_diameter_bound(dyadic_line):
    assert cell_diameter_bound(dyadic_line, 3) == 0.125
    assert cell_diameter_bound(dyadic_line, 0) == 1.0
    triadic_square = make_padic(IndexShape(2, 1), 3)
    assert cell_diameter_bound(triadic_square, 2) == pytest.approx(np.sqrt(2) / 9)


def test_dedup_points():
    points = np.array([[[0.5]], [[0.5 + 1e-14]], [[0.25]], [[0.5]]])
    kept = dedup_points(points, 1e-12)
    np.testing.assert_array_equal(kept.ravel(), [0.5, 0.25])


def test_admissible_depth_zero(dyadic_line):
    np.testing.assert_array_equal(minimal_admissible_points(dyadic_line, 0), np.zeros((1, 1, 1)))


@pytest.mark.parametrize("k", [1, 3, 5])
def test_admissible_contains_dyadic_grid(dyadic_line, k):
    points = set(np.round(minimal_admissible_points(dyadic_line, k).ravel() * 2 ** k, 9))
    assert {float(j) for j in range(2 ** k)} <= points


def test_admissible_points_stay_in_tile():
    ifs = make_padic(IndexShape(2, 1), 3)
    points = minimal_admissible_points(ifs, 3)
    assert np.all(ifs.tile.contains(points, 1e-12))


def test_admissible_points_cover_tile(rng, dyadic_product):
    k = 4
    points = minimal_admissible_points(dyadic_product, k).reshape(-1, 2)
    queries = rng.random((500, 2))
    distances = np.min(np.linalg.norm(queries[:, None, :] - points[None], axis=-1), axis=1)
    assert distances.max() <= cell_diameter_bound(dyadic_product, k)


def test_admissible_budget(dyadic_product):
    with pytest.raises(BudgetExceededError):
        minimal_admissible_points(dyadic_product, 10, budget=100)


@pytest.mark.parametrize("base", [2, 3])
@pytest.mark.parametrize("r", [1, 2, 3])
def test_padic_systems_pass_validation(base, r):
    report = validate_hypotheses(make_padic(IndexShape(r, 1), base), samples=4000, seed=1)
    assert report.all_pass, report.failures
    assert report.overlap_volume_exact <= 1e-12
    assert report.beta_sum == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("base", [2, 3])
def test_padic_systems_with_two_coordinates_tile_but_scale(base):
    report = validate_hypotheses(make_padic(IndexShape(2, 2), base), samples=4000, seed=1)
    assert report.volume_sum == pytest.approx(1.0, abs=1e-12)
    assert report.overlap_pass and report.coverage_pass and report.h3_pass
    assert report.failures == ["beta_sum"]


def test_duplicated_map_fails_overlap():
    ifs = make_explicit(IndexShape(1, 1), [([0.5], [0.0]), ([0.5], [0.0])], [0.0], [1.0])
    report = validate_hypotheses(ifs, samples=4000)
    assert report.beta_pass
    assert not report.overlap_pass
    assert report.overlap_volume_exact == pytest.approx(0.5)
    assert "overlap" in report.failures


def test_stretched_axis_fails_beta_sum():
    maps = [([0.6, 0.5], [a, b]) for a in (0.0, 0.4) for b in (0.0, 0.5)]
    ifs = make_explicit(IndexShape(2, 1), maps, [0.0, 0.0], [1.0, 1.0])
    report = validate_hypotheses(ifs, samples=4000)
    assert report.beta_sum == pytest.approx(1.2)
    assert not report.beta_pass
    assert "beta_sum" in report.failures


def test_negative_tile_fails_h3():
    ifs = make_explicit(IndexShape(1, 1), [([0.5], [-0.5]), ([0.5], [0.0])], [-1.0], [0.0])
    report = validate_hypotheses(ifs, samples=4000)
    assert not report.h3_nonnegative
    assert report.failures == ["h3"]


def test_non_box_tile_uses_volume_bookkeeping():
    ifs = make_explicit(
        IndexShape(1, 1), [([0.5], [0.0]), ([0.5], [0.5])], [0.0], [1.0],
        volume=0.8, is_box=False
    )
    report = validate_hypotheses(ifs, samples=1000)
    assert report.overlap_volume_exact is None
    assert report.overlap_pass and report.coverage_pass

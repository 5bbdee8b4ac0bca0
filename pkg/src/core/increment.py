"""
The multidimensional increment and N-dimensional Lipschitz estimates
"""
import math

import numpy as np
import structlog

from .fields import ScalarField, restrict
from .geometry import (
    Box, Point, corner_points, corner_set, corner_signs, group_norm_product
)
from ..utils.errors import DegeneratePairError, ShapeMismatchError

logger = structlog.get_logger(__name__)


def compensated_sum(terms: np.ndarray, axis: int = -1) -> np.ndarray:
    """Neumaier summation along one axis, vectorised over the others"""
    terms = np.moveaxis(np.asarray(terms, dtype=float), axis, 0)
    total = np.zeros(terms.shape[1:])
    compensation = np.zeros(terms.shape[1:])
    for term in terms:
        t = total + term
        compensation += np.where(
            np.abs(total) >= np.abs(term), (total - t) + term, (term - t) + total
        )
        total = t
    return total + compensation


def increment(f: ScalarField, x: Point, y: Point) -> float:
    """□f(x, y) = sum_M (-1)^|M| f(pi_M(x, y))"""
    if x.shape != f.shape or y.shape != f.shape:
        raise ShapeMismatchError(f"points do not match field shape {f.shape.dims}")
    corners = corner_set(x, y)
    values = f.evaluate(np.stack([corner.values for _, corner in corners]))
    return math.fsum(mask.sign * v for (mask, _), v in zip(corners, values))


def increment_many(f: ScalarField, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """□f over batches of pairs shaped (..., r, s)"""
    x = f.shape.check(np.asarray(x, dtype=float))
    y = f.shape.check(np.asarray(y, dtype=float))
    values = f.evaluate(corner_points(x, y))
    return compensated_sum(values * corner_signs(f.shape.r), axis=-1)


def increment_inductive(f: ScalarField, x: Point, y: Point, m: int) -> float:
    """□f_{y_m:m}(x', y') - □f_{x_m:m}(x', y') over the groups other than m"""
    r = f.shape.r
    if r < 2:
        raise ShapeMismatchError("the inductive identity needs r >= 2")
    if not 0 <= m < r:
        raise ShapeMismatchError(f"group index {m} out of range for r={r}")
    others = [n for n in range(r) if n != m]
    x_rest = Point(x.restrict(others))
    y_rest = Point(y.restrict(others))
    upper = restrict(f, {m: y.group(m)})
    lower = restrict(f, {m: x.group(m)})
    return increment(upper, x_rest, y_rest) - increment(lower, x_rest, y_rest)


def lipschitz_ratio(f: ScalarField, x: Point, y: Point) -> float:
    """|□f(x, y)| / ||x - y||^N"""
    denominator = group_norm_product(y - x)
    if denominator == 0.0:
        raise DegeneratePairError(
            "zero denominator; increment is 0 by cancellation only when f ignores cross terms"
        )
    return abs(increment(f, x, y)) / denominator


def estimate_ndim_lipschitz_constant(
    f: ScalarField,
    region: Box,
    samples: int,
    seed: int = 0
) -> float:
    """Empirical sup of the Lipschitz ratio over sampled nondegenerate pairs

    The result is a lower bound for the true constant C.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    x = region.sample(rng, samples)
    y = region.sample(rng, samples)

    # Degenerate pairs (0/0) are regenerated, never scored
    for _ in range(100):
        degenerate = group_norm_product(y - x) == 0.0
        if not np.any(degenerate):
            break
        y[degenerate] = region.sample(rng, int(degenerate.sum()))
    else:
        keep = group_norm_product(y - x) > 0.0
        x, y = x[keep], y[keep]

    ratios = np.abs(increment_many(f, x, y)) / group_norm_product(y - x)
    estimate = float(np.max(ratios)) if ratios.size else 0.0
    logger.debug("Lipschitz constant estimated", samples=len(ratios), estimate=estimate)
    return estimate

"""
Mixed partials, the N-gradient, its average over a tile, the limit operator
and moduli of continuity
"""
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple
import math

import numpy as np
import structlog

from config import settings
from .fields import ScalarField, make_multilinear
from .geometry import Box, MultilinearForm, Point, PointLike, as_array, corner_signs, mask_table
from .increment import compensated_sum, increment
from ..dynamics.ifs import AffineIFS, Tile, as_tile, word_arrays
from ..utils.errors import (
    BudgetExceededError, ConfigurationError, OrderError, ShapeMismatchError,
    UnsupportedDifferentiationError, ZeroMeasureTileError
)

logger = structlog.get_logger(__name__)

# Batch (..., r, s) -> (..., m)
VectorField = Callable[[np.ndarray], np.ndarray]


class QuadratureScheme(str, Enum):
    TENSOR_GRID = "tensor_grid"
    SELF_SIMILAR = "self_similar"


class QuadratureRule(str, Enum):
    """Per-axis node placement for tensor grids"""
    GAUSS_LEGENDRE = "gauss_legendre"
    MIDPOINT = "midpoint"
    ANCHOR = "anchor"  # left cell corner


class Representative(str, Enum):
    TILE_ANCHOR = "tile_anchor"
    TILE_CENTROID = "tile_centroid"


@dataclass(frozen=True)
class Quadrature:
    """How integrals over T are discretised"""
    scheme: QuadratureScheme
    points_per_axis: int = 8
    rule: QuadratureRule = QuadratureRule.GAUSS_LEGENDRE
    depth: int = 6
    representative: Representative = Representative.TILE_ANCHOR
    ifs: Optional[AffineIFS] = None

    def __post_init__(self):
        if self.scheme == QuadratureScheme.TENSOR_GRID and self.points_per_axis < 2:
            raise ConfigurationError("tensor_grid needs points_per_axis >= 2")
        if self.scheme == QuadratureScheme.SELF_SIMILAR:
            if self.depth < 0:
                raise ConfigurationError("self_similar needs depth >= 0")
            if self.ifs is None:
                raise ConfigurationError("self_similar quadrature needs the IFS of the tile")

    @classmethod
    def tensor_grid(cls, points_per_axis: int, rule: QuadratureRule = QuadratureRule.GAUSS_LEGENDRE):
        return cls(QuadratureScheme.TENSOR_GRID, points_per_axis=points_per_axis, rule=QuadratureRule(rule))

    @classmethod
    def self_similar(
        cls,
        ifs: AffineIFS,
        depth: int,
        representative: Representative = Representative.TILE_ANCHOR
    ):
        return cls(
            QuadratureScheme.SELF_SIMILAR, depth=depth,
            representative=Representative(representative), ifs=ifs
        )


# Mixed partials

def _finite_difference(f: ScalarField, k: Tuple[int, ...], points: np.ndarray) -> np.ndarray:
    """Nested central differences, one per group, at coordinate (n, k[n])"""
    r = f.shape.r
    rows = np.arange(r)
    cols = np.asarray(k)
    chosen = points[..., rows, cols]                                   # (..., r)
    h = settings.fd_relative_step * np.maximum(1.0, np.abs(chosen))   # (..., r)

    # Sign pattern e_n = +1 where the mask bit is clear, -1 where set
    directions = np.where(mask_table(r), -1.0, 1.0)                    # (2^r, r)
    shifted = np.repeat(points[..., None, :, :], 2 ** r, axis=-3).copy()
    shifted[..., rows, cols] += directions * h[..., None, :]
    values = f.evaluate(shifted)                                       # (..., 2^r)
    weighted = compensated_sum(values * corner_signs(r), axis=-1)
    return weighted / np.prod(2.0 * h, axis=-1)


def mixed_partial_many(f: ScalarField, k: Sequence[int], points: np.ndarray) -> np.ndarray:
    """d~_k f over a batch (..., r, s)"""
    points = f.shape.check(np.asarray(points, dtype=float))
    k = tuple(int(v) for v in k)
    if len(k) != f.shape.r or any(not 0 <= v < f.shape.s for v in k):
        raise ShapeMismatchError(f"multi-index {k} invalid for shape {f.shape.dims}")
    if f.has_exact_partial:
        return f.exact_partial(k, points)
    if f.shape.r > settings.fd_max_groups:
        raise UnsupportedDifferentiationError(
            f"finite differences over r={f.shape.r} groups lose double precision; "
            f"supply exact partials for {f.description}"
        )
    logger.debug("Finite-difference partial", field=f.description, k=k)
    return _finite_difference(f, k, points)


def mixed_partial(f: ScalarField, k: Sequence[int], x: PointLike) -> float:
    values = np.asarray(mixed_partial_many(f, k, as_array(x, f.shape)))
    if values.size != 1:
        raise ShapeMismatchError(f"expected one point, got {values.size}")
    return float(values.item())


def n_gradient_many(f: ScalarField, points: np.ndarray) -> np.ndarray:
    """All s^r mixed partials in canonical K^N order: (..., r, s) -> (..., s^r)"""
    points = f.shape.check(np.asarray(points, dtype=float))
    if f.form is not None:
        return np.broadcast_to(f.form.flat(), points.shape[:-2] + (f.shape.n_multi_indices,))
    return np.stack(
        [mixed_partial_many(f, k, points) for k in f.shape.multi_indices()], axis=-1
    )


def n_gradient(f: ScalarField, x: PointLike) -> MultilinearForm:
    """nabla_N f(x)"""
    values = n_gradient_many(f, as_array(x, f.shape))
    return MultilinearForm.from_flat(values, f.shape)


# Quadrature over tiles

def _axis_rule(rule: QuadratureRule, n: int, lo: float, hi: float) -> Tuple[np.ndarray, np.ndarray]:
    width = hi - lo
    if rule == QuadratureRule.GAUSS_LEGENDRE:
        nodes, weights = np.polynomial.legendre.leggauss(n)
        return lo + (nodes + 1.0) * width / 2.0, weights * width / 2.0
    offset = 0.5 if rule == QuadratureRule.MIDPOINT else 0.0
    return lo + (np.arange(n) + offset) * width / n, np.full(n, width / n)


def _tensor_grid_integral(f: ScalarField, box: Box, quad: Quadrature) -> np.ndarray:
    shape = f.shape
    n = quad.points_per_axis
    total_nodes = n ** shape.size
    if total_nodes > settings.quadrature_budget:
        raise BudgetExceededError("tensor-grid nodes", total_nodes, settings.quadrature_budget)

    lo, hi = box.lo.flat(), box.hi.flat()
    axes = [_axis_rule(quad.rule, n, lo[l], hi[l]) for l in range(shape.size)]
    nodes = np.stack([a[0] for a in axes])    # (L, n)
    weights = np.stack([a[1] for a in axes])  # (L, n)

    partials = []
    chunk = max(1, settings.evaluation_chunk)
    for start in range(0, total_nodes, chunk):
        idx = np.arange(start, min(start + chunk, total_nodes))
        digits = np.unravel_index(idx, (n,) * shape.size)
        points = np.stack([nodes[l][digits[l]] for l in range(shape.size)], axis=-1)
        w = np.prod(np.stack([weights[l][digits[l]] for l in range(shape.size)]), axis=0)
        grads = n_gradient_many(f, points.reshape(-1, *shape.dims))
        partials.append(w @ grads)
    return compensated_sum(np.stack(partials), axis=0)


def _self_similar_average(f: ScalarField, tile: Tile, quad: Quadrature) -> np.ndarray:
    """sum over words i of length depth of mu(T^i)/mu(T) nabla_N f(rep(T^i))"""
    table = word_arrays(quad.ifs, quad.depth)
    if quad.representative == Representative.TILE_ANCHOR:
        reps = table.anchors
    else:
        reps = table.apply(tile.box.center.values)
    grads = n_gradient_many(f, reps)
    return compensated_sum(table.volume_weights[:, None] * grads, axis=0)


def gradient_increment(f: ScalarField, tile, quad: Quadrature) -> MultilinearForm:
    """nabla~_N f(T): the integral of nabla_N f over T"""
    tile = as_tile(tile)
    if tile.shape != f.shape:
        raise ShapeMismatchError(f"tile lives in {tile.shape.dims}, field in {f.shape.dims}")
    if not f.has_exact_partial and f.form is None:
        logger.warning("Gradient integrated from finite differences", field=f.description)

    if quad.scheme == QuadratureScheme.TENSOR_GRID:
        if not tile.is_box:
            raise ConfigurationError("tensor_grid quadrature needs a box tile")
        values = _tensor_grid_integral(f, tile.box, quad)
    else:
        values = tile.volume * _self_similar_average(f, tile, quad)
    return MultilinearForm.from_flat(values, f.shape)


def average_gradient(f: ScalarField, tile, quad: Quadrature) -> MultilinearForm:
    """nabla-bar_N f(T) = nabla~_N f(T) / mu(T)"""
    tile = as_tile(tile)
    if tile.volume <= 0.0:
        raise ZeroMeasureTileError("the average N-gradient needs mu(T) > 0")
    if quad.scheme == QuadratureScheme.SELF_SIMILAR:
        if tile.shape != f.shape:
            raise ShapeMismatchError(f"tile lives in {tile.shape.dims}, field in {f.shape.dims}")
        return MultilinearForm.from_flat(_self_similar_average(f, tile, quad), f.shape)
    return gradient_increment(f, tile, quad).scaled(1.0 / tile.volume)


def limit_operator(f: ScalarField, tile, quad: Quadrature) -> ScalarField:
    """L f(x) = nabla-bar_N f(T) x^N"""
    limit = make_multilinear(average_gradient(f, tile, quad))
    limit.description = f"limit of {f.description}"
    return limit


def verify_ftc_fact(f: ScalarField, a: PointLike, b: PointLike, quad: Quadrature) -> float:
    """|integral of d_N f over P(a, b) - increment of f on (a, b)| for s = 1"""
    if f.shape.s != 1:
        raise ShapeMismatchError("the box form of the fundamental theorem needs s = 1")
    if quad.scheme != QuadratureScheme.TENSOR_GRID:
        raise ConfigurationError("integrals over P(a, b) use tensor_grid quadrature")
    a = Point(as_array(a, f.shape))
    b = Point(as_array(b, f.shape))
    if np.any(a.values > b.values):
        raise OrderError("P(a, b) needs a <= b componentwise")
    integral = gradient_increment(f, Box(a, b), quad).flat()[0]
    return abs(float(integral) - increment(f, a, b))


# Moduli of continuity

def field_gradient(f: ScalarField) -> VectorField:
    """x -> nabla_N f(x) as a flat vector"""
    return lambda points: n_gradient_many(f, points)


def modulus_curve(
    g: VectorField,
    tile,
    deltas: Sequence[float],
    samples: int = 4_000,
    seed: int = 0
) -> np.ndarray:
    """Empirical omega_T(g, delta) on a grid of deltas, nondecreasing by cumulative max

    The same base points and directions are reused for every delta, and y
    ranges over a delta-ball around x that may leave T.
    """
    tile = as_tile(tile)
    deltas = np.asarray(deltas, dtype=float)
    if deltas.size == 0:
        return deltas
    if np.any(deltas <= 0):
        raise ValueError("deltas must be positive")
    order = np.argsort(deltas)

    rng = np.random.default_rng(seed)
    x = tile.box.sample(rng, samples)
    directions = rng.standard_normal(x.shape)
    norms = np.linalg.norm(directions, axis=(-2, -1), keepdims=True)
    directions /= np.where(norms > 0, norms, 1.0)
    # Half the radii sit just inside the ball's edge, where the sup is usually attained
    radii = rng.random(samples) ** (1.0 / tile.shape.size)
    radii[: samples // 2] = 1.0 - 1e-9
    offsets = directions * radii[:, None, None]

    gx = np.asarray(g(x), dtype=float).reshape(samples, -1)
    estimates = np.empty(len(deltas))
    for j in order:
        gy = np.asarray(g(x + deltas[j] * offsets), dtype=float).reshape(samples, -1)
        estimates[j] = float(np.max(np.linalg.norm(gy - gx, axis=-1)))

    estimates[order] = np.maximum.accumulate(estimates[order])
    return estimates


def modulus_of_continuity(g: VectorField, tile, delta: float, samples: int = 4_000, seed: int = 0) -> float:
    """omega_T(g, delta) = sup ||g(x) - g(y)|| over x in T, ||x - y|| < delta (sampled)"""
    return float(modulus_curve(g, tile, [delta], samples, seed)[0])


def lipschitz_envelope(constant: float) -> Callable[[float], float]:
    """delta -> L delta, the analytic modulus of an L-Lipschitz map"""
    if constant < 0:
        raise ValueError("Lipschitz constant must be >= 0")
    return lambda delta: constant * delta


def gradient_modulus(f: ScalarField, tile, samples: int = 4_000, seed: int = 0) -> Tuple[Callable[[float], float], bool]:
    """A modulus for nabla_N f on T and whether it is an empirical estimate

    Declared gradient Lipschitz constants give the safe-side envelope.
    """
    if f.gradient_lipschitz is not None:
        return lipschitz_envelope(f.gradient_lipschitz), False
    gradient = field_gradient(f)
    tile = as_tile(tile)

    def empirical(delta: float) -> float:
        if delta <= 0:
            return 0.0
        return modulus_of_continuity(gradient, tile, delta, samples, seed)

    return empirical, True


def quadrature_tolerance(
    f: ScalarField,
    tile,
    quad: Quadrature,
    x: PointLike,
    modulus: Optional[Callable[[float], float]] = None
) -> float:
    """||x||^N omega_T(nabla_N f, h): the error of L f(x) caused by discretising the average

    h is diam T q^depth for self-similar rules, the grid cell diameter for
    midpoint and anchor rules, and diam T for Gauss-Legendre.
    """
    tile = as_tile(tile)
    if modulus is None:
        modulus, _ = gradient_modulus(f, tile)
    if quad.scheme == QuadratureScheme.SELF_SIMILAR:
        h = quad.ifs.q ** quad.depth * tile.diameter
    elif quad.rule == QuadratureRule.GAUSS_LEGENDRE:
        h = tile.diameter
    else:
        h = tile.diameter / quad.points_per_axis
    u = as_array(x, f.shape)
    norm_product = math.prod(float(v) for v in np.linalg.norm(u, axis=-1))
    return norm_product * modulus(h)

"""
Multivariate distribution functions, box measures, the expanding map g_gamma
and g_gamma-invariance of measures on T (s = 1)
"""
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple
import itertools
import math

import numpy as np
import structlog

from config import settings
from ..core.fields import (
    ScalarField, constant_field, make_coordinate_polynomial, make_custom_expression,
    make_multilinear
)
from ..core.geometry import IndexShape, MultilinearForm, Point, PointLike, as_array, precedes
from ..core.gradient import Quadrature, average_gradient, n_gradient_many
from ..core.increment import increment, increment_many
from ..models.report import (
    DistributionCheck, InvarianceMethod, InvarianceReport, MethodVerdict, OrbitStats
)
from ..utils.errors import OrderError, OutsideTileError, ShapeMismatchError
from .ifs import AffineIFS, Tile
from .mw_operator import MWOperator, affordable_depth

logger = structlog.get_logger(__name__)


class DistributionMeasure:
    """A finite Borel measure nu on T given by d(x) = nu(Q(0, x))"""

    def __init__(self, d: ScalarField, name: str = "measure", density: Optional[ScalarField] = None):
        if d.shape.s != 1:
            raise ShapeMismatchError("distribution functions are defined for s = 1")
        self.d = d
        self.name = name
        self.density = density

    @property
    def shape(self) -> IndexShape:
        return self.d.shape

    @property
    def smoothness(self):
        return self.d.smoothness

    def __call__(self, x: PointLike):
        return self.d(x)

    def __repr__(self) -> str:
        return f"DistributionMeasure({self.name}, r={self.shape.r})"


def lebesgue_measure(r: int, scale: float = 1.0) -> DistributionMeasure:
    """d(x) = scale * prod_n x_n"""
    shape = IndexShape(r, 1)
    d = make_multilinear(MultilinearForm(np.full((1,) * r, float(scale))))
    name = "lebesgue" if scale == 1.0 else f"{scale}*lebesgue"
    return DistributionMeasure(d, name, density=constant_field(shape, scale))


def power_measure(r: int, exponents: Sequence[int]) -> DistributionMeasure:
    """d(x) = prod_n x_n^{e_n} on the unit cube, e_n >= 1"""
    shape = IndexShape(r, 1)
    e = np.asarray(exponents, dtype=int).reshape(-1)
    if e.size != r or np.any(e < 1):
        raise ShapeMismatchError(f"need {r} exponents >= 1, got {list(exponents)}")
    # On [0, 1]^r: |d/dx_m prod_n e_n x_n^{e_n - 1}| <= prod_n e_n * (e_m - 1)
    lipschitz = float(np.prod(e)) * math.sqrt(float(np.sum((e - 1) ** 2)))
    d = make_coordinate_polynomial(shape, [1.0], [e.reshape(shape.dims)], gradient_lipschitz=lipschitz)
    density = make_coordinate_polynomial(
        shape, [float(np.prod(e))], [np.maximum(e - 1, 0).reshape(shape.dims)]
    )
    return DistributionMeasure(d, f"power{e.tolist()}", density=density)


def zero_measure(r: int) -> DistributionMeasure:
    shape = IndexShape(r, 1)
    return DistributionMeasure(constant_field(shape, 0.0), "zero", density=constant_field(shape, 0.0))


def expression_measure(r: int, expression: str) -> DistributionMeasure:
    return DistributionMeasure(make_custom_expression(IndexShape(r, 1), expression), expression)


# Box measures

def box_measure(nu: DistributionMeasure, a: PointLike, b: PointLike) -> float:
    """nu(Q(a, b)) = []d(a, b) for a ⪯ b"""
    a = Point(as_array(a, nu.shape))
    b = Point(as_array(b, nu.shape))
    if not precedes(a, b):
        raise OrderError(f"box corners need 0 <= a <= b, got a={a.flat().tolist()}, b={b.flat().tolist()}")
    return increment(nu.d, a, b)


def box_measure_many(nu: DistributionMeasure, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = nu.shape.check(np.asarray(a, dtype=float))
    b = nu.shape.check(np.asarray(b, dtype=float))
    if np.any(a < 0) or np.any(a > b):
        raise OrderError("box corners need 0 <= a <= b")
    return increment_many(nu.d, a, b)


def sample_boxes(tile: Tile, count: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Random a ⪯ b with both corners in T"""
    box = tile.box
    a = box.sample(rng, count)
    b = a + rng.random(a.shape) * (box.hi.values - a)
    return a, b


def grid_points(tile: Tile, grid: int) -> np.ndarray:
    """Uniform grid including both tile faces: (grid^L, r, s)"""
    lo, hi = tile.box.lo.flat(), tile.box.hi.flat()
    axes = [np.linspace(lo[l], hi[l], grid) for l in range(len(lo))]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    return mesh.reshape(-1, *tile.shape.dims)


def check_distribution(
    nu: DistributionMeasure,
    tile: Tile,
    samples: int = 2_000,
    seed: int = 0,
    tol: float = 1e-10
) -> DistributionCheck:
    """d(0) = 0, d nondecreasing along ⪯ and nonnegative box measures"""
    rng = np.random.default_rng(seed)
    origin = float(nu.d(np.zeros(nu.shape.dims)))
    a, b = sample_boxes(tile, samples, rng)
    measures = box_measure_many(nu, a, b)
    lower = b * rng.random(b.shape)
    monotone = bool(np.all(nu.d.evaluate(b) >= nu.d.evaluate(lower) - tol))
    min_measure = float(measures.min())
    passed = abs(origin) <= tol and monotone and min_measure >= -tol
    if not passed:
        logger.warning("Distribution sanity failed", measure=nu.name, origin=origin, min_box=min_measure)
    return DistributionCheck(
        value_at_origin=origin, min_box_measure=min_measure, monotone=monotone, passed=passed
    )


def absolute_continuity_bound(
    nu: DistributionMeasure,
    tile: Tile,
    grid: int = 21,
    samples: int = 2_000,
    seed: int = 0
) -> Tuple[float, float]:
    """C = sup over a grid of |d_N d|, and the largest nu(Q) - C mu(Q) over sampled boxes"""
    density = n_gradient_many(nu.d, grid_points(tile, grid))[..., 0]
    constant = float(np.max(np.abs(density)))
    a, b = sample_boxes(tile, samples, np.random.default_rng(seed))
    volumes = np.prod(b - a, axis=(-2, -1))
    violation = float(np.max(box_measure_many(nu, a, b) - constant * volumes))
    return constant, violation


# The expanding map

def g_gamma_many(ifs: AffineIFS, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(gamma^i)^{-1}(x) on the half-open cell of the lowest matching i; 0 off every cell

    Returns the images and the cell indices, -1 marking off-cell points.
    """
    points = ifs.shape.check(np.asarray(points, dtype=float))
    if not np.all(ifs.tile.contains(points)):
        raise OutsideTileError("g_gamma is defined on T only")
    lo, hi = ifs.image_boxes()
    extra = (None,) * (points.ndim - 2)
    lo = lo[(slice(None),) + extra]
    hi = hi[(slice(None),) + extra]
    inside = np.all((points >= lo) & (points < hi), axis=(-2, -1))  # (|I|, ...)
    found = inside.any(axis=0)
    cells = np.where(found, np.argmax(inside, axis=0), -1)
    safe = np.where(found, cells, 0)
    alphas = ifs.alphas[safe][..., :, None]
    anchors = ifs.anchors[safe]
    images = np.where(found[..., None, None], (points - anchors) / alphas, 0.0)
    return images, cells


def g_gamma(ifs: AffineIFS, x: PointLike) -> Tuple[Point, Optional[int]]:
    images, cells = g_gamma_many(ifs, as_array(x, ifs.shape))
    cell = int(cells)
    return Point(images), (None if cell < 0 else cell)


# Pushforward

def pushforward_distribution(ifs: AffineIFS, nu: DistributionMeasure) -> DistributionMeasure:
    """d of nu_gamma(E) = sum_i nu(gamma^i(E)), which is M d"""
    if ifs.shape != nu.shape:
        raise ShapeMismatchError("measure and IFS live on different shapes")
    return DistributionMeasure(MWOperator(ifs).image(nu.d), f"pushforward({nu.name})")


def pushforward_by_boxes(ifs: AffineIFS, nu: DistributionMeasure, a: PointLike, b: PointLike) -> float:
    """nu_gamma(Q(a, b)) = sum_i nu(Q(gamma^i(a), gamma^i(b)))"""
    a = as_array(a, nu.shape)
    b = as_array(b, nu.shape)
    return math.fsum(
        box_measure(nu, m.apply(a), m.apply(b)) for m in ifs.maps
    )


def pushforward_consistency(ifs: AffineIFS, nu: DistributionMeasure, points: np.ndarray) -> float:
    """max |sum_i nu(Q(gamma^i(0), gamma^i(x))) - (M d)(x)| with M in corner form"""
    operator = MWOperator(ifs)
    origin = np.zeros(nu.shape.dims)
    gaps = [
        abs(pushforward_by_boxes(ifs, nu, origin, x) - operator.apply_direct(nu.d, x))
        for x in np.asarray(points, dtype=float).reshape(-1, *nu.shape.dims)
    ]
    return max(gaps) if gaps else 0.0


# Invariance

def _fixed_point_verdict(ifs, nu, points, tol) -> MethodVerdict:
    residuals = np.abs(MWOperator(ifs).apply_many(nu.d, points) - nu.d.evaluate(points))
    worst = int(np.argmax(residuals))
    return MethodVerdict(
        method=InvarianceMethod.FIXED_POINT,
        residual=float(residuals[worst]),
        passed=bool(residuals[worst] <= tol),
        worst_location=points[worst].ravel().tolist(),
        details={"points": len(points)},
    )


def _boxes_verdict(ifs, nu, a, b, tol) -> MethodVerdict:
    images_a = ifs.apply_all(a)
    images_b = ifs.apply_all(b)
    pushed = box_measure_many(nu, images_a, images_b).sum(axis=0)
    residuals = np.abs(pushed - box_measure_many(nu, a, b))
    worst = int(np.argmax(residuals))
    return MethodVerdict(
        method=InvarianceMethod.PUSHFORWARD_BOXES,
        residual=float(residuals[worst]),
        passed=bool(residuals[worst] <= tol),
        worst_location=a[worst].ravel().tolist() + b[worst].ravel().tolist(),
        details={"boxes": len(a)},
    )


def _form_verdict(ifs, nu, points, tol, depth) -> MethodVerdict:
    form = average_gradient(nu.d, ifs.tile, Quadrature.self_similar(ifs, depth))
    lam = float(form.flat()[0])
    residuals = np.abs(nu.d.evaluate(points) - form.evaluate(points))
    worst = int(np.argmax(residuals))
    nonnegative = lam >= -settings.lambda_sign_tolerance
    return MethodVerdict(
        method=InvarianceMethod.MULTILINEAR_FORM,
        residual=float(residuals[worst]),
        passed=bool(nonnegative and residuals[worst] <= tol),
        worst_location=points[worst].ravel().tolist(),
        details={"lambda": lam, "lambda_nonnegative": nonnegative, "depth": depth},
    )


def check_invariance(
    ifs: AffineIFS,
    nu: DistributionMeasure,
    methods: Optional[Sequence[InvarianceMethod]] = None,
    tol: float = 1e-8,
    samples: int = 2_000,
    seed: int = 0,
    grid: int = 11,
    depth: Optional[int] = None
) -> InvarianceReport:
    """Compare the three characterisations of g_gamma-invariance of nu"""
    if nu.shape != ifs.shape:
        raise ShapeMismatchError("measure and IFS live on different shapes")
    methods = list(InvarianceMethod) if methods is None else [InvarianceMethod(m) for m in methods]
    depth = affordable_depth(ifs, settings.default_quadrature_depth if depth is None else depth)

    points = grid_points(ifs.tile, grid)
    a, b = sample_boxes(ifs.tile, samples, np.random.default_rng(seed))

    verdicts: List[MethodVerdict] = []
    for method in methods:
        if method == InvarianceMethod.FIXED_POINT:
            verdicts.append(_fixed_point_verdict(ifs, nu, points, tol))
        elif method == InvarianceMethod.PUSHFORWARD_BOXES:
            verdicts.append(_boxes_verdict(ifs, nu, a, b, tol))
        else:
            verdicts.append(_form_verdict(ifs, nu, points, tol, depth))

    outcomes = {v.passed for v in verdicts}
    report = InvarianceReport(
        measure=nu.name,
        system=ifs.name,
        tolerance=tol,
        verdicts=verdicts,
        consistent=len(outcomes) <= 1,
        invariant=bool(verdicts) and all(outcomes),
        sanity=check_distribution(nu, ifs.tile, samples, seed),
    )
    if not report.consistent:
        logger.warning("Invariance verdicts disagree", measure=nu.name, system=ifs.name)
    logger.info("Invariance checked", measure=nu.name, invariant=report.invariant, consistent=report.consistent)
    return report


# Orbits

def _rational(value: float) -> Fraction:
    return Fraction(float(value)).limit_denominator(10 ** 12)


def simulate_orbit(
    ifs: AffineIFS,
    x0: PointLike,
    steps: int,
    grid: int = 8,
    arithmetic: str = "exact",
    trajectory_limit: Optional[int] = None
) -> OrbitStats:
    """Follow x_{t+1} = g_gamma(x_t) and count visits to a uniform grid of half-open cells

    Exact arithmetic recovers rational map coefficients and starts from the
    decimal value of x0; binary floats would collapse to 0 under maps such
    as 2x mod 1.
    """
    if steps < 0 or grid < 1:
        raise ValueError("steps must be >= 0 and grid >= 1")
    if arithmetic not in ("exact", "float"):
        raise ValueError(f"arithmetic must be 'exact' or 'float', got {arithmetic!r}")
    start = as_array(x0, ifs.shape)
    if not bool(ifs.tile.contains(start)):
        raise OutsideTileError(f"orbit start {start.ravel().tolist()} lies outside T")
    limit = settings.orbit_trajectory_limit if trajectory_limit is None else trajectory_limit

    if arithmetic == "exact":
        number = _rational
        x = [Fraction(repr(float(v))) for v in start.ravel()]
    else:
        number = float
        x = [float(v) for v in start.ravel()]

    dims = ifs.shape.size
    cells_lo, cells_hi = (arr.reshape(ifs.size, dims) for arr in ifs.image_boxes())
    cells = [
        ([number(v) for v in cells_lo[i]], [number(v) for v in cells_hi[i]],
         [number(v) for v in ifs.anchors[i].ravel()],
         [number(v) for v in np.repeat(ifs.alphas[i], ifs.shape.s)])
        for i in range(ifs.size)
    ]
    tile_lo = [number(v) for v in ifs.tile.box.lo.flat()]
    tile_hi = [number(v) for v in ifs.tile.box.hi.flat()]
    widths = [h - l for l, h in zip(tile_lo, tile_hi)]

    counts = np.zeros((grid,) * dims, dtype=np.int64)
    escaped = 0
    trajectory = []
    for t in range(steps):
        if t < limit:
            trajectory.append([float(v) for v in x])
        index = []
        for v, l, w in zip(x, tile_lo, widths):
            j = math.floor((v - l) * grid / w) if w else 0
            index.append(j)
        if all(0 <= j < grid for j in index):
            counts[tuple(index)] += 1
        else:
            escaped += 1
            if not all(l <= v <= h for v, l, h in zip(x, tile_lo, tile_hi)):
                logger.warning("Orbit left the tile", step=t, point=[float(v) for v in x])

        for lo, hi, anchor, alpha in cells:
            if all(l <= v < h for v, l, h in zip(x, lo, hi)):
                x = [(v - a) / s for v, a, s in zip(x, anchor, alpha)]
                break
        else:
            x = [number(0)] * dims

    frequencies = (counts / steps).ravel().tolist() if steps else [0.0] * counts.size
    logger.info("Orbit simulated", steps=steps, grid=grid, escaped=escaped, arithmetic=arithmetic)
    return OrbitStats(
        start=start.ravel().tolist(),
        steps=steps,
        grid=grid,
        cell_shape=[grid] * dims,
        frequencies=frequencies,
        escaped=escaped,
        arithmetic=arithmetic,
        trajectory=trajectory,
    )


def cell_labels(grid: int, dims: int) -> List[Tuple[int, ...]]:
    """Cell multi-indices in the order of OrbitStats.frequencies"""
    return list(itertools.product(range(grid), repeat=dims))

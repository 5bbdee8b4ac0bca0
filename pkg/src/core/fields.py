"""
Scalar fields f: V^N -> R with optional exact mixed partials
"""
from enum import Enum
from typing import Callable, Dict, Optional, Sequence, Tuple
import math

import numpy as np
import structlog

from .geometry import IndexShape, MultilinearForm, PointLike, as_array
from ..utils.errors import ConfigurationError, ShapeMismatchError
from ..utils.metrics import field_evaluations_total

logger = structlog.get_logger(__name__)

Evaluator = Callable[[np.ndarray], np.ndarray]
# (k, points) -> d~_k f(points); k picks one coordinate per group
PartialEvaluator = Callable[[Tuple[int, ...], np.ndarray], np.ndarray]


class Smoothness(str, Enum):
    """Smoothness grade of a field"""
    BLACK_BOX = "black_box"
    CN = "cn"  # every mixed partial d~_k continuous
    ANALYTIC = "analytic"


_SMOOTHNESS_ORDER = [Smoothness.BLACK_BOX, Smoothness.CN, Smoothness.ANALYTIC]


class ScalarField:
    """A deterministic, vectorised function on V^N

    ``evaluate`` maps a batch of points shaped (..., r, s) to values shaped
    (...). When ``exact_partial`` is present it returns the mixed partial
    d~_k f in which group n is differentiated once at coordinate k[n].
    ``gradient_lipschitz`` is an analytic Lipschitz constant for the
    N-gradient, used as the safe-side modulus of continuity.
    """

    def __init__(
        self,
        shape: IndexShape,
        evaluate: Evaluator,
        exact_partial: Optional[PartialEvaluator] = None,
        smoothness: Smoothness = Smoothness.BLACK_BOX,
        kind: str = "custom",
        gradient_lipschitz: Optional[float] = None,
        form: Optional[MultilinearForm] = None,
        description: str = ""
    ):
        self.shape = shape
        self._evaluate = evaluate
        self._exact_partial = exact_partial
        self.smoothness = Smoothness(smoothness)
        self.kind = kind
        self.gradient_lipschitz = gradient_lipschitz
        self.form = form
        self.description = description or kind

    @property
    def has_exact_partial(self) -> bool:
        return self._exact_partial is not None

    @property
    def is_multilinear(self) -> bool:
        return self.form is not None

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = self.shape.check(np.asarray(points, dtype=float))
        values = np.asarray(self._evaluate(points), dtype=float)
        if values.shape != points.shape[:-2]:
            values = np.broadcast_to(values, points.shape[:-2]).copy()
        field_evaluations_total.labels(kind=self.kind).inc(values.size)
        return values

    def __call__(self, x: PointLike):
        values = self.evaluate(as_array(x, self.shape))
        return float(values) if values.ndim == 0 else values

    def exact_partial(self, k: Sequence[int], points: np.ndarray) -> np.ndarray:
        if self._exact_partial is None:
            raise ValueError(f"field {self.description} has no exact partials")
        k = tuple(int(v) for v in k)
        if len(k) != self.shape.r or any(not 0 <= v < self.shape.s for v in k):
            raise ShapeMismatchError(f"multi-index {k} invalid for shape {self.shape.dims}")
        points = self.shape.check(np.asarray(points, dtype=float))
        values = np.asarray(self._exact_partial(k, points), dtype=float)
        return np.broadcast_to(values, points.shape[:-2])

    # Linear structure (the MW operator is linear, tests lean on this)

    def linear_combination(self, a: float, other: "ScalarField", b: float) -> "ScalarField":
        if other.shape != self.shape:
            raise ShapeMismatchError("fields live on different shapes")
        first, second = self, other

        def evaluate(points):
            return a * first.evaluate(points) + b * second.evaluate(points)

        partial = None
        if first.has_exact_partial and second.has_exact_partial:
            def partial(k, points):
                return a * first.exact_partial(k, points) + b * second.exact_partial(k, points)

        lipschitz = None
        if first.gradient_lipschitz is not None and second.gradient_lipschitz is not None:
            lipschitz = abs(a) * first.gradient_lipschitz + abs(b) * second.gradient_lipschitz

        form = None
        if first.form is not None and second.form is not None:
            form = first.form.scaled(a) + second.form.scaled(b)

        smoothness = min(
            first.smoothness, second.smoothness, key=_SMOOTHNESS_ORDER.index
        )
        return ScalarField(
            self.shape, evaluate, partial, smoothness, kind="combination",
            gradient_lipschitz=lipschitz, form=form,
            description=f"{a}*({first.description}) + {b}*({second.description})"
        )

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return self.linear_combination(1.0, other, 1.0)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return self.linear_combination(1.0, other, -1.0)

    def __mul__(self, factor: float) -> "ScalarField":
        return self.linear_combination(float(factor), self, 0.0)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"ScalarField({self.description}, shape={self.shape.dims}, {self.smoothness.value})"


def constant_field(shape: IndexShape, value: float) -> ScalarField:
    value = float(value)
    return ScalarField(
        shape,
        lambda points: np.full(points.shape[:-2], value),
        lambda k, points: np.zeros(points.shape[:-2]),
        Smoothness.ANALYTIC,
        kind="constant",
        gradient_lipschitz=0.0,
        description=f"constant {value}"
    )


def make_multilinear(form: MultilinearForm) -> ScalarField:
    """x -> lambda x^N; every d~_k is the constant lambda_k"""
    coeffs = form.coeffs

    def partial(k, points):
        return np.full(points.shape[:-2], coeffs[k])

    return ScalarField(
        form.shape,
        form.evaluate,
        partial,
        Smoothness.ANALYTIC,
        kind="multilinear",
        gradient_lipschitz=0.0,
        form=form,
        description=f"multilinear {form.flat().tolist()}"
    )


def _selected_entries(shape: IndexShape, k: Tuple[int, ...]) -> np.ndarray:
    """Boolean (r, s) mask of the coordinates (n, k[n]) differentiated by d~_k"""
    chosen = np.zeros(shape.dims, dtype=bool)
    chosen[np.arange(shape.r), list(k)] = True
    return chosen


def make_coordinate_polynomial(
    shape: IndexShape,
    coefficients: Sequence[float],
    exponents: Sequence[Sequence[Sequence[int]]],
    gradient_lipschitz: Optional[float] = None
) -> ScalarField:
    """f(x) = sum_t c_t prod_l x_l^{e_{t,l}} with integer exponents e >= 0

    Polynomials have no global gradient Lipschitz constant; callers may
    declare one valid on the region of interest.
    """
    coefficients = np.asarray(coefficients, dtype=float)
    exponents = np.asarray(exponents, dtype=int).reshape((-1,) + shape.dims)
    if len(coefficients) != len(exponents):
        raise ShapeMismatchError("one coefficient per exponent table is required")
    if np.any(exponents < 0):
        raise ShapeMismatchError("exponents must be nonnegative")

    def evaluate(points):
        terms = np.prod(points[..., None, :, :] ** exponents, axis=(-2, -1))
        return terms @ coefficients

    def partial(k, points):
        chosen = _selected_entries(shape, k)
        powered = points[..., None, :, :] ** exponents
        lowered = exponents * points[..., None, :, :] ** np.maximum(exponents - 1, 0)
        factors = np.where(chosen, lowered, powered)
        return np.prod(factors, axis=(-2, -1)) @ coefficients

    description = " + ".join(
        f"{c}*x^{e.ravel().tolist()}" for c, e in zip(coefficients, exponents)
    )
    return ScalarField(
        shape, evaluate, partial, Smoothness.ANALYTIC,
        kind="coordinate_polynomial", gradient_lipschitz=gradient_lipschitz,
        description=description or "0"
    )


def make_product_sine(
    shape: IndexShape,
    frequencies: Sequence,
    phases: Optional[Sequence] = None,
    amplitude: float = 1.0
) -> ScalarField:
    """f(x) = A prod_l sin(w_l x_l + phi_l)"""
    omega = np.asarray(frequencies, dtype=float).reshape(shape.dims)
    phi = np.zeros(shape.dims) if phases is None else np.asarray(phases, dtype=float).reshape(shape.dims)

    def evaluate(points):
        return amplitude * np.prod(np.sin(omega * points + phi), axis=(-2, -1))

    def partial(k, points):
        chosen = _selected_entries(shape, k)
        angle = omega * points + phi
        factors = np.where(chosen, omega * np.cos(angle), np.sin(angle))
        return amplitude * np.prod(factors, axis=(-2, -1))

    # |d/dx_l d~_k f| <= |A| |w_l| prod_{l in k} |w_l|
    norm_omega = float(np.linalg.norm(omega))
    per_component = [
        abs(amplitude) * norm_omega * float(np.prod(np.abs(omega[_selected_entries(shape, k)])))
        for k in shape.multi_indices()
    ]
    return ScalarField(
        shape, evaluate, partial, Smoothness.ANALYTIC,
        kind="product_sine",
        gradient_lipschitz=math.sqrt(sum(c * c for c in per_component)),
        description=f"{amplitude}*prod sin({omega.ravel().tolist()} x + {phi.ravel().tolist()})"
    )


def expression_symbols(shape: IndexShape) -> Dict[str, Tuple[int, int]]:
    """Names accepted in expressions: x{n}_{k} (1-based), x{n} if s = 1, x if |L| = 1"""
    names = {}
    for n in range(shape.r):
        for k in range(shape.s):
            names[f"x{n + 1}_{k + 1}"] = (n, k)
        if shape.s == 1:
            names[f"x{n + 1}"] = (n, 0)
    if shape.size == 1:
        names["x"] = (0, 0)
    return names


def make_custom_expression(shape: IndexShape, expression: str) -> ScalarField:
    """Parse an arithmetic expression with sympy; partials fall back to finite differences"""
    import sympy as sp

    names = expression_symbols(shape)
    symbols = {name: sp.Symbol(name, real=True) for name in names}
    try:
        parsed = sp.sympify(expression, locals=symbols)
    except (sp.SympifyError, SyntaxError, TypeError) as e:
        raise ConfigurationError(f"cannot parse expression {expression!r}: {e}") from e

    unknown = {str(sym) for sym in parsed.free_symbols} - set(names)
    if unknown:
        raise ConfigurationError(f"unknown variables {sorted(unknown)} in {expression!r}")

    ordered = list(names)
    fn = sp.lambdify([symbols[name] for name in ordered], parsed, modules="numpy")
    coordinates = [names[name] for name in ordered]

    def evaluate(points):
        args = [points[..., n, k] for n, k in coordinates]
        return np.asarray(fn(*args), dtype=float) * np.ones(points.shape[:-2])

    return ScalarField(
        shape, evaluate, None, Smoothness.BLACK_BOX,
        kind="custom_expression", description=expression
    )


def restrict(f: ScalarField, fixed: Dict[int, Sequence[float]]) -> ScalarField:
    """f_x: freeze the groups in ``fixed`` and return a field on the remaining ones"""
    r, s = f.shape.dims
    if not fixed or len(fixed) >= r:
        raise ShapeMismatchError("restriction must fix a nonempty proper subset of groups")
    frozen = {}
    for n, v in fixed.items():
        if not 0 <= n < r:
            raise ShapeMismatchError(f"group index {n} out of range for r={r}")
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.size != s:
            raise ShapeMismatchError(f"group value has {v.size} coordinates, expected {s}")
        frozen[n] = v
    free = [n for n in range(r) if n not in frozen]
    reduced = IndexShape(len(free), s)

    if f.form is not None:
        coeffs = f.form.coeffs
        for n in sorted(frozen, reverse=True):
            coeffs = np.tensordot(coeffs, frozen[n], axes=([n], [0]))
        return make_multilinear(MultilinearForm(coeffs.reshape((s,) * len(free))))

    def evaluate(points):
        merged = np.empty(points.shape[:-2] + (r, s))
        merged[..., free, :] = points
        for n, v in frozen.items():
            merged[..., n, :] = v
        return f.evaluate(merged)

    smoothness = Smoothness.CN if f.smoothness != Smoothness.BLACK_BOX else Smoothness.BLACK_BOX
    return ScalarField(
        reduced, evaluate, None, smoothness,
        kind=f.kind, description=f"{f.description} restricted to groups {free}"
    )

"""
The MW-operator Mf(x) = sum_i []f(gamma^i(0), gamma^i(x)), its iterates,
convergence to the limit operator and fixed-point testing
"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional
import math
import threading

import numpy as np
import pandas as pd
import structlog

from config import settings
from ..core.fields import ScalarField, make_multilinear
from ..core.geometry import PointLike, as_array, corner_points, corner_signs
from ..core.gradient import Quadrature, average_gradient, gradient_modulus, quadrature_tolerance
from ..core.increment import compensated_sum, increment_many
from ..models.report import ConvergenceReport, FixedPointReport
from ..utils.errors import BudgetExceededError, ConfigurationError, ShapeMismatchError
from ..utils.metrics import operator_iterations_total
from .ifs import AffineIFS, WordTable, word_arrays

logger = structlog.get_logger(__name__)

ALGORITHMS = ("words", "composition")


@dataclass
class IterateResult:
    """M^p f on a batch of points with the error bound at each point"""
    p: int
    points: np.ndarray   # (n, r, s)
    values: np.ndarray   # (n,)
    bounds: np.ndarray   # (n,)
    evaluations_used: int
    algorithm: str
    bound_is_estimate: bool = False
    extra: dict = field(default_factory=dict)

    def as_frame(self) -> pd.DataFrame:
        flat = self.points.reshape(len(self.points), -1)
        frame = pd.DataFrame(flat, columns=[f"x{l}" for l in range(flat.shape[1])])
        frame["p"] = self.p
        frame["value"] = self.values
        frame["bound"] = self.bounds
        for name, column in self.extra.items():
            frame[name] = column
        return frame


def _quantized_unique(points: np.ndarray):
    """Unique rows up to the memo quantum; returns (unique points, inverse)"""
    flat = points.reshape(len(points), -1)
    scale = max(1.0, float(np.abs(flat).max())) if flat.size else 1.0
    keys = np.round(flat / (settings.memo_quantum * scale)).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    return points[first], inverse.reshape(-1)


def _single(values: np.ndarray) -> float:
    values = np.asarray(values)
    if values.size != 1:
        raise ShapeMismatchError(f"expected one point, got {values.size}")
    return float(values.item())


class MWOperator:
    """M attached to one affine IFS"""

    def __init__(self, ifs: AffineIFS):
        self.ifs = ifs
        self.shape = ifs.shape
        # Per-thread count of distinct points evaluated by the last composition iterate
        self._evaluations = threading.local()
        if abs(ifs.beta_sum - 1.0) > settings.beta_tolerance:
            logger.warning(
                "Operator weights do not sum to 1; multilinear fields are scaled by their sum "
                "and the convergence bound does not apply",
                system=ifs.name, beta_sum=ifs.beta_sum
            )

    def _points(self, x: PointLike) -> np.ndarray:
        return as_array(x, self.shape)

    # One application

    def apply_many(self, f: ScalarField, points: np.ndarray) -> np.ndarray:
        """Increment form over a batch (..., r, s)"""
        points = self._points(points)
        images = self.ifs.apply_all(points)
        origins = np.broadcast_to(
            self.ifs.anchors.reshape((self.ifs.size,) + (1,) * (points.ndim - 2) + self.shape.dims),
            images.shape
        )
        return compensated_sum(increment_many(f, origins, images), axis=0)

    def apply(self, f: ScalarField, x: PointLike) -> float:
        return _single(self.apply_many(f, self._points(x)))

    def apply_direct(self, f: ScalarField, x: PointLike) -> float:
        """Corner form: sum_i sum_M (-1)^|M| f(gamma^i(pi_M(0, x)))"""
        point = self._points(x)
        corners = corner_points(np.zeros_like(point), point)  # (2^r, r, s)
        values = f.evaluate(self.ifs.apply_all(corners))      # (|I|, 2^r)
        signed = values * corner_signs(self.shape.r)
        return math.fsum(signed.ravel())

    def image(self, f: ScalarField) -> ScalarField:
        """Mf as a field; only the all-x corner depends on every group, so
        d~_k Mf(x) = sum_i beta^i d~_k f(gamma^i(x))"""
        betas = self.ifs.betas
        operator = self

        def evaluate(points):
            return operator.apply_many(f, points)

        partial = None
        if f.has_exact_partial:
            def partial(k, points):
                images = operator.ifs.apply_all(points)
                return np.tensordot(betas, f.exact_partial(k, images), axes=1)

        lipschitz = None
        if f.gradient_lipschitz is not None:
            lipschitz = f.gradient_lipschitz * self.ifs.q * float(betas.sum())

        return ScalarField(
            self.shape, evaluate, partial, f.smoothness, kind="mw_image",
            gradient_lipschitz=lipschitz, description=f"M({f.description})"
        )

    # Iterates

    def iterate_words_many(
        self,
        f: ScalarField,
        p: int,
        points: np.ndarray,
        budget: Optional[int] = None
    ) -> np.ndarray:
        """Word sum sum_{i in I^p} []f(gamma^i(0), gamma^i(x))"""
        points = self._points(points)
        if p == 0:
            return f.evaluate(points)
        table = word_arrays(self.ifs, p, budget)
        batch = points.reshape(-1, *self.shape.dims)
        per_word = max(1, len(batch) * self.shape.n_corners)
        step = max(1, settings.evaluation_chunk // per_word)

        chunk_totals = []
        for start in range(0, len(table), step):
            chunk = WordTable(p, table.alphas[start:start + step], table.anchors[start:start + step])
            images = chunk.apply(batch)                                    # (w, n, r, s)
            origins = np.broadcast_to(chunk.anchors[:, None], images.shape)
            chunk_totals.append(compensated_sum(increment_many(f, origins, images), axis=0))
        operator_iterations_total.labels(algorithm="words").inc()
        total = compensated_sum(np.stack(chunk_totals), axis=0)
        return total.reshape(points.shape[:-2])

    def iterate_by_words(self, f: ScalarField, p: int, x: PointLike, budget: Optional[int] = None) -> float:
        return _single(self.iterate_words_many(f, p, self._points(x), budget))

    def iterate_composition_many(
        self,
        f: ScalarField,
        p: int,
        points: np.ndarray,
        budget: Optional[int] = None
    ) -> np.ndarray:
        """p nested applications of M, expanded level by level

        Each level holds the distinct corner points reached so far; f is
        evaluated once per distinct point of the last level and the signed
        sums are folded back up.
        """
        if p < 0:
            raise ValueError(f"depth must be >= 0, got {p}")
        points = self._points(points)
        budget = settings.expansion_budget if budget is None else budget
        batch = points.reshape(-1, *self.shape.dims)
        fan_out = self.ifs.size * self.shape.n_corners
        signs = np.tile(corner_signs(self.shape.r), self.ifs.size)  # map-major, corner-minor

        frontier, root_inverse = _quantized_unique(batch)
        links: List[np.ndarray] = []
        for level in range(p):
            edges = len(frontier) * fan_out
            if edges > budget:
                logger.warning("Expansion budget exceeded", level=level, edges=edges, budget=budget)
                raise BudgetExceededError(f"corner expansion at level {level + 1}", edges, budget)
            images = self.ifs.apply_all(frontier)                          # (|I|, n, r, s)
            origins = np.broadcast_to(self.ifs.anchors[:, None], images.shape)
            corners = corner_points(origins, images)                       # (|I|, n, 2^r, r, s)
            children = np.swapaxes(corners, 0, 1).reshape(-1, *self.shape.dims)
            frontier, inverse = _quantized_unique(children)
            links.append(inverse.reshape(-1, fan_out))

        values = f.evaluate(frontier)
        for inverse in reversed(links):
            values = compensated_sum(values[inverse] * signs, axis=-1)
        operator_iterations_total.labels(algorithm="composition").inc()
        self._evaluations.value = len(frontier)
        return values[root_inverse].reshape(points.shape[:-2])

    def iterate_by_composition(self, f: ScalarField, p: int, x: PointLike, budget: Optional[int] = None) -> float:
        return _single(self.iterate_composition_many(f, p, self._points(x), budget))

    def iterate(
        self,
        f: ScalarField,
        p: int,
        points: np.ndarray,
        algorithm: str = "words",
        modulus: Optional[Callable[[float], float]] = None,
        budget: Optional[int] = None
    ) -> IterateResult:
        points = self._points(points).reshape(-1, *self.shape.dims)
        if algorithm == "words":
            values = self.iterate_words_many(f, p, points, budget)
            evaluations = self.ifs.size ** p * len(points) * (self.shape.n_corners if p else 1)
        elif algorithm == "composition":
            values = self.iterate_composition_many(f, p, points, budget)
            evaluations = self._evaluations.value
        else:
            raise ConfigurationError(f"unknown iterate algorithm {algorithm!r}, expected one of {ALGORITHMS}")
        estimate = False
        if modulus is None:
            modulus, estimate = gradient_modulus(f, self.ifs.tile)
        bounds = self.error_bound(p, points, modulus)
        logger.debug("Iterate computed", p=p, points=len(points), algorithm=algorithm)
        return IterateResult(p, points, values, bounds, evaluations, algorithm, estimate)

    # Convergence

    def error_bound(self, p: int, points: np.ndarray, modulus: Callable[[float], float]) -> np.ndarray:
        """2 ||x||^N omega_T(nabla_N f, r_x q^p) with r_x = max(diam T, ||x||)"""
        points = self._points(points)
        norm_product = np.prod(np.linalg.norm(points, axis=-1), axis=-1)
        radius = np.maximum(self.ifs.tile.diameter, np.linalg.norm(points, axis=(-2, -1)))
        # Empirical moduli are costly, so each distinct radius is evaluated once
        radii, inverse = np.unique(radius * self.ifs.q ** p, return_inverse=True)
        omega = np.array([modulus(float(rho)) for rho in radii])[inverse.reshape(-1)].reshape(radius.shape)
        return 2.0 * norm_product * omega

    def converge(
        self,
        f: ScalarField,
        x: PointLike,
        tol: float,
        p_max: int,
        modulus: Optional[Callable[[float], float]] = None
    ) -> ConvergenceReport:
        """Iterate until successive values differ by less than tol; the bound certifies, never stops"""
        if tol <= 0:
            raise ValueError("tol must be positive")
        point = self._points(x)
        estimate = False
        if modulus is None:
            modulus, estimate = gradient_modulus(f, self.ifs.tile)

        history = [self.iterate_by_words(f, 0, point)]
        delta = math.inf
        converged = False
        for p in range(p_max):
            history.append(self.iterate_by_words(f, p + 1, point))
            delta = abs(history[p + 1] - history[p])
            logger.debug("Convergence step", p=p + 1, value=history[p + 1], delta=delta)
            if delta < tol:
                converged = True
                break
        # On success M^p f(x) is reported for the p whose successor moved less than tol
        p_used = p if converged else len(history) - 1
        value = history[p_used]

        depth = affordable_depth(self.ifs, max(p_used, settings.default_quadrature_depth))
        quad = Quadrature.self_similar(self.ifs, depth)
        limit = make_multilinear(average_gradient(f, self.ifs.tile, quad))
        limit_value = limit(point)
        bound = float(self.error_bound(p_used, point, modulus))
        quad_tol = quadrature_tolerance(f, self.ifs.tile, quad, point, modulus)
        gap = abs(value - limit_value)
        report = ConvergenceReport(
            point=point.ravel().tolist(),
            value=value,
            p_used=p_used,
            achieved_delta=delta,
            converged=converged,
            theoretical_bound=bound,
            limit_value=limit_value,
            limit_gap=gap,
            quadrature_tolerance=quad_tol,
            certified=gap <= bound + quad_tol + 1e-12,
            bound_is_estimate=estimate,
            history=history,
        )
        logger.info("Convergence finished", p_used=p_used, converged=converged, certified=report.certified)
        return report

    # Fixed points

    def check_fixed_point(
        self,
        f: ScalarField,
        sample_points: np.ndarray,
        tol: float,
        depth: Optional[int] = None
    ) -> FixedPointReport:
        """max |Mf - f| over the samples; fixed fields get lambda fitted from the average gradient"""
        points = self._points(sample_points).reshape(-1, *self.shape.dims)
        residuals = np.abs(self.apply_many(f, points) - f.evaluate(points))
        worst = int(np.argmax(residuals))
        max_residual = float(residuals[worst])
        is_fixed = max_residual < tol
        depth = settings.default_quadrature_depth if depth is None else depth
        depth = affordable_depth(self.ifs, depth)

        lam = None
        fit = None
        if is_fixed:
            form = average_gradient(f, self.ifs.tile, Quadrature.self_similar(self.ifs, depth))
            lam = form.flat().tolist()
            fit = float(np.max(np.abs(f.evaluate(points) - form.evaluate(points))))

        logger.info("Fixed point checked", is_fixed=is_fixed, max_residual=max_residual)
        return FixedPointReport(
            is_fixed=is_fixed,
            max_residual=max_residual,
            worst_point=points[worst].ravel().tolist(),
            lambda_recovered=lam,
            fit_residual=fit,
            tolerance=tol,
            samples=len(points),
            quadrature_depth=depth,
        )


def affordable_depth(ifs: AffineIFS, depth: int) -> int:
    """Largest d <= depth with |I|^d inside the word budget"""
    depth = max(0, int(depth))
    while depth > 0 and ifs.size ** depth > settings.word_budget:
        depth -= 1
    return depth

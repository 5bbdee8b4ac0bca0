"""
Turn a validated ExperimentConfig into runtime objects
"""
from pathlib import Path
import json

import numpy as np
import structlog
from pydantic import ValidationError

from ..core.fields import (
    ScalarField, constant_field, make_coordinate_polynomial, make_custom_expression,
    make_multilinear, make_product_sine
)
from ..core.geometry import IndexShape, MultilinearForm
from ..core.gradient import Quadrature, QuadratureRule, QuadratureScheme, Representative
from ..dynamics.ifs import AffineIFS, make_explicit, make_padic
from ..dynamics.measure import (
    DistributionMeasure, expression_measure, grid_points, lebesgue_measure, power_measure,
    zero_measure
)
from ..models.experiment import (
    DistributionKind, ExperimentConfig, FieldKind, IFSKind
)
from ..utils.errors import ConfigurationError

logger = structlog.get_logger(__name__)


def load_config(path: str) -> ExperimentConfig:
    """Read and validate a JSON experiment file"""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"invalid config {path}:\n{e}") from e
    logger.debug("Config loaded", path=str(path), name=config.name)
    return config


def build_shape(config: ExperimentConfig) -> IndexShape:
    return IndexShape(config.shape.r, config.shape.s)


def build_ifs(config: ExperimentConfig) -> AffineIFS:
    shape = build_shape(config)
    spec = config.ifs
    if spec.kind == IFSKind.PADIC:
        ifs = make_padic(shape, spec.base)
        if spec.name:
            ifs.name = spec.name
        return ifs
    return make_explicit(
        shape,
        [(m.alpha, m.a) for m in spec.maps],
        spec.tile.lo,
        spec.tile.hi,
        volume=spec.tile.volume,
        is_box=spec.tile.is_box,
        name=spec.name or config.name,
    )


def build_field(config: ExperimentConfig) -> ScalarField:
    spec = config.field
    if spec is None:
        raise ConfigurationError("this command needs a field section")
    shape = build_shape(config)

    if spec.kind == FieldKind.MULTILINEAR:
        field = make_multilinear(MultilinearForm.from_flat(spec.coefficients, shape))
    elif spec.kind == FieldKind.COORDINATE_POLYNOMIAL:
        field = make_coordinate_polynomial(
            shape, spec.coefficients,
            [np.asarray(e).reshape(shape.dims) for e in spec.exponents],
            gradient_lipschitz=spec.gradient_lipschitz,
        )
    elif spec.kind == FieldKind.PRODUCT_SINE:
        field = make_product_sine(shape, spec.frequencies, spec.phases, spec.amplitude)
    elif spec.kind == FieldKind.CONSTANT:
        field = constant_field(shape, spec.value)
    else:
        field = make_custom_expression(shape, spec.expression)

    # A declared constant overrides the built-in one
    if spec.gradient_lipschitz is not None:
        field.gradient_lipschitz = spec.gradient_lipschitz
    return field


def build_distribution(config: ExperimentConfig) -> DistributionMeasure:
    spec = config.distribution
    if spec is None:
        raise ConfigurationError("this command needs a distribution section")
    r = config.shape.r
    if spec.kind == DistributionKind.LEBESGUE:
        return lebesgue_measure(r)
    if spec.kind == DistributionKind.SCALED:
        return lebesgue_measure(r, spec.scale)
    if spec.kind == DistributionKind.POWER:
        return power_measure(r, spec.exponents)
    if spec.kind == DistributionKind.ZERO:
        return zero_measure(r)
    return expression_measure(r, spec.expression)


def build_quadrature(config: ExperimentConfig, ifs: AffineIFS) -> Quadrature:
    spec = config.quadrature
    if QuadratureScheme(spec.scheme) == QuadratureScheme.TENSOR_GRID:
        return Quadrature.tensor_grid(spec.points_per_axis, QuadratureRule(spec.rule))
    return Quadrature.self_similar(ifs, spec.depth, Representative(spec.representative))


def build_points(config: ExperimentConfig, ifs: AffineIFS) -> np.ndarray:
    """Explicit run.points, else a uniform grid over the tile"""
    if config.run.points is not None:
        return np.asarray(config.run.points, dtype=float).reshape(-1, *ifs.shape.dims)
    return grid_points(ifs.tile, config.run.grid)

"""
Data models for experiment configuration files
"""
from pydantic import BaseModel, Field, field_validator, model_validator
from typing import Annotated, List, Optional
from enum import Enum

from .report import InvarianceMethod

# Rejects NaN and infinities
FiniteFloat = Annotated[float, Field(allow_inf_nan=False)]


class ShapeSpec(BaseModel):
    """r groups of s coordinates"""
    r: int = Field(ge=1, le=6)
    s: int = Field(ge=1, le=4)


class IFSKind(str, Enum):
    PADIC = "padic"
    EXPLICIT = "explicit"


class MapSpec(BaseModel):
    """gamma(x) = (alpha_n x_n + a_n)_n; a is flat, row-major over (r, s)"""
    alpha: List[FiniteFloat] = Field(min_length=1)
    a: List[FiniteFloat] = Field(min_length=1)

    @field_validator("alpha")
    @classmethod
    def positive_scalars(cls, v):
        if any(x <= 0 for x in v):
            raise ValueError("group scalars must be positive")
        return v


class TileSpec(BaseModel):
    """Box [lo, hi] or bounding box of a non-box tile with a declared volume"""
    lo: List[FiniteFloat]
    hi: List[FiniteFloat]
    volume: Optional[float] = Field(default=None, ge=0.0)
    is_box: bool = True


class IFSSpec(BaseModel):
    kind: IFSKind
    base: Optional[int] = Field(default=None, ge=2, le=16)
    maps: List[MapSpec] = Field(default_factory=list)
    tile: Optional[TileSpec] = None
    name: Optional[str] = None

    @model_validator(mode="after")
    def kind_requirements(self):
        if self.kind == IFSKind.PADIC and self.base is None:
            raise ValueError("padic systems need a base")
        if self.kind == IFSKind.EXPLICIT:
            if len(self.maps) < 2:
                raise ValueError("explicit systems need at least two maps")
            if self.tile is None:
                raise ValueError("explicit systems need a tile")
        return self


class FieldKind(str, Enum):
    MULTILINEAR = "multilinear"
    COORDINATE_POLYNOMIAL = "coordinate_polynomial"
    PRODUCT_SINE = "product_sine"
    CONSTANT = "constant"
    CUSTOM_EXPRESSION = "custom_expression"


class FieldSpec(BaseModel):
    """A scalar field; which keys matter depends on kind"""
    kind: FieldKind
    coefficients: List[float] = Field(default_factory=list)  # lambda (s^r) or term weights
    exponents: List[List[int]] = Field(default_factory=list)  # one flat (r*s) table per term
    frequencies: List[float] = Field(default_factory=list)
    phases: Optional[List[float]] = None
    amplitude: float = 1.0
    value: float = 0.0
    expression: Optional[str] = None
    gradient_lipschitz: Optional[float] = Field(default=None, ge=0.0)


class DistributionKind(str, Enum):
    LEBESGUE = "lebesgue"
    POWER = "power"
    ZERO = "zero"
    SCALED = "scaled"
    EXPRESSION = "expression"


class DistributionSpec(BaseModel):
    kind: DistributionKind
    exponents: List[int] = Field(default_factory=list)
    scale: float = Field(default=1.0, ge=0.0)
    expression: Optional[str] = None


class QuadratureSpec(BaseModel):
    scheme: str = Field(default="self_similar", pattern="^(tensor_grid|self_similar)$")
    points_per_axis: int = Field(default=16, ge=2, le=512)
    rule: str = Field(default="gauss_legendre", pattern="^(gauss_legendre|midpoint|anchor)$")
    depth: int = Field(default=6, ge=0, le=30)
    representative: str = Field(default="tile_anchor", pattern="^(tile_anchor|tile_centroid)$")


class RunParameters(BaseModel):
    """Command parameters; every command reads the subset it needs"""
    p: int = Field(default=4, ge=0, le=40)
    p_values: Optional[List[int]] = None
    tol: float = Field(default=1e-8, gt=0.0, le=1.0)
    samples: int = Field(default=2_000, ge=1, le=10_000_000)
    grid: int = Field(default=11, ge=1, le=1001)
    points: Optional[List[List[FiniteFloat]]] = None
    seed: int = Field(default=0, ge=0)
    algorithm: str = Field(default="words", pattern="^(words|composition)$")
    budget: Optional[int] = Field(default=None, ge=1)
    depth: int = Field(default=4, ge=0, le=30)
    steps: int = Field(default=100_000, ge=0, le=100_000_000)
    x0: Optional[List[FiniteFloat]] = None
    orbit_grid: int = Field(default=8, ge=1, le=1024)
    arithmetic: str = Field(default="exact", pattern="^(exact|float)$")
    methods: Optional[List[InvarianceMethod]] = None

    @field_validator("p_values")
    @classmethod
    def nonnegative_depths(cls, v):
        if v is not None and any(p < 0 or p > 40 for p in v):
            raise ValueError("p_values must lie in [0, 40]")
        return v


class OutputSpec(BaseModel):
    csv: Optional[str] = None
    report: Optional[str] = None


class ExperimentConfig(BaseModel):
    """One experiment: a system, a field or measure, and run parameters"""
    name: str = "experiment"
    shape: ShapeSpec
    ifs: IFSSpec
    field: Optional[FieldSpec] = None
    distribution: Optional[DistributionSpec] = None
    quadrature: QuadratureSpec = Field(default_factory=QuadratureSpec)
    run: RunParameters = Field(default_factory=RunParameters)
    output: OutputSpec = Field(default_factory=OutputSpec)

    @model_validator(mode="after")
    def consistent_shapes(self):
        r, s = self.shape.r, self.shape.s
        size = r * s

        for i, m in enumerate(self.ifs.maps):
            if len(m.alpha) != r:
                raise ValueError(f"map {i}: alpha needs {r} entries, got {len(m.alpha)}")
            if len(m.a) != size:
                raise ValueError(f"map {i}: a needs {size} entries, got {len(m.a)}")
        tile = self.ifs.tile
        if tile is not None and (len(tile.lo) != size or len(tile.hi) != size):
            raise ValueError(f"tile corners need {size} entries")

        f = self.field
        if f is not None:
            if f.kind == FieldKind.MULTILINEAR and len(f.coefficients) != s ** r:
                raise ValueError(f"multilinear fields need {s ** r} coefficients")
            if f.kind == FieldKind.COORDINATE_POLYNOMIAL:
                if len(f.exponents) != len(f.coefficients) or not f.exponents:
                    raise ValueError("one exponent table per coefficient is required")
                if any(len(e) != size or min(e) < 0 for e in f.exponents):
                    raise ValueError(f"exponent tables need {size} nonnegative entries")
            if f.kind == FieldKind.PRODUCT_SINE:
                if len(f.frequencies) != size or (f.phases is not None and len(f.phases) != size):
                    raise ValueError(f"frequencies and phases need {size} entries")
            if f.kind == FieldKind.CUSTOM_EXPRESSION and not f.expression:
                raise ValueError("custom_expression fields need an expression")

        d = self.distribution
        if d is not None:
            if s != 1:
                raise ValueError("distributions are defined for s = 1")
            if d.kind == DistributionKind.POWER and (len(d.exponents) != r or min(d.exponents) < 1):
                raise ValueError(f"power distributions need {r} exponents >= 1")
            if d.kind == DistributionKind.EXPRESSION and not d.expression:
                raise ValueError("expression distributions need an expression")

        run = self.run
        if run.points is not None and any(len(x) != size for x in run.points):
            raise ValueError(f"evaluation points need {size} coordinates")
        if run.x0 is not None and len(run.x0) != size:
            raise ValueError(f"x0 needs {size} coordinates")
        return self

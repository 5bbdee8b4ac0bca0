"""
Data models for verdicts and reports emitted by the checks
"""
from pydantic import BaseModel, Field
from typing import List, Optional, Dict, Any
from datetime import datetime
from enum import Enum


class HypothesisReport(BaseModel):
    """Outcome of checking H1, H2 and H3 on an affine IFS"""
    system: str
    n_maps: int
    q: float
    h1_pass: bool
    beta_sum: float
    beta_deviation: float
    beta_pass: bool
    volume_sum: float  # sum of mu(gamma^i(T)) / mu(T), equals beta_sum only for s = 1
    overlap_volume_exact: Optional[float] = None  # max pairwise, box images only
    overlap_volume_mc: float  # Monte Carlo multiplicity excess
    overlap_pass: bool
    coverage_defect: float
    coverage_pass: bool
    containment_pass: bool
    admissible_pass: bool
    h3_nonnegative: bool
    h3_lower_set: bool
    h3_pass: bool
    samples: int
    seed: int
    failures: List[str] = Field(default_factory=list)
    all_pass: bool
    checked_at: datetime = Field(default_factory=datetime.utcnow)


class ConvergenceReport(BaseModel):
    """Iterates M^p f(x) followed until successive differences fall below tol"""
    point: List[float]
    value: float
    p_used: int
    achieved_delta: float
    converged: bool
    theoretical_bound: float
    limit_value: float
    limit_gap: float
    quadrature_tolerance: float
    certified: bool
    bound_is_estimate: bool
    history: List[float] = Field(default_factory=list)


class FixedPointReport(BaseModel):
    """Residual of the MW equation Mf = f on sample points"""
    is_fixed: bool
    max_residual: float
    worst_point: List[float] = Field(default_factory=list)
    lambda_recovered: Optional[List[float]] = None
    fit_residual: Optional[float] = None
    tolerance: float
    samples: int
    quadrature_depth: int


class InvarianceMethod(str, Enum):
    """Three equivalent characterisations of g_gamma-invariance"""
    FIXED_POINT = "fixed_point"
    PUSHFORWARD_BOXES = "pushforward_boxes"
    MULTILINEAR_FORM = "multilinear_form"


class MethodVerdict(BaseModel):
    """Verdict of one invariance characterisation"""
    method: InvarianceMethod
    residual: float
    passed: bool
    worst_location: List[float] = Field(default_factory=list)
    details: Dict[str, Any] = Field(default_factory=dict)

    class Config:
        use_enum_values = True


class DistributionCheck(BaseModel):
    """Sanity of a multivariate distribution function"""
    value_at_origin: float
    min_box_measure: float
    monotone: bool
    passed: bool


class InvarianceReport(BaseModel):
    """Outcome of comparing the invariance characterisations"""
    measure: str
    system: str
    tolerance: float
    verdicts: List[MethodVerdict] = Field(default_factory=list)
    consistent: bool
    invariant: bool
    sanity: Optional[DistributionCheck] = None


class OrbitStats(BaseModel):
    """Empirical statistics of an orbit of g_gamma"""
    start: List[float]
    steps: int
    grid: int
    cell_shape: List[int]
    frequencies: List[float]
    escaped: int
    arithmetic: str
    trajectory: List[List[float]] = Field(default_factory=list)

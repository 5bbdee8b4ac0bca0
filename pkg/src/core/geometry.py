"""
Index bookkeeping, points, boxes, corner selections and multilinear forms

Points of V^N are stored as float arrays shaped (r, s): row n is the group x_n,
column k the coordinate x_{n,k}. Batches of points are arrays shaped
(..., r, s); every vectorised routine in the package follows that layout.
"""
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterator, List, Tuple, Union
import itertools

import numpy as np

from ..utils.errors import OrderError, ShapeMismatchError


@dataclass(frozen=True)
class IndexShape:
    """Dimensions of V^N: r groups (|N|) of s coordinates (|K|)"""
    r: int
    s: int

    def __post_init__(self):
        if int(self.r) != self.r or int(self.s) != self.s:
            raise ShapeMismatchError(f"shape must be integral, got r={self.r}, s={self.s}")
        if self.r < 1 or self.s < 1:
            raise ShapeMismatchError(f"shape needs r >= 1 and s >= 1, got r={self.r}, s={self.s}")

    @property
    def size(self) -> int:
        """|L| = r*s"""
        return self.r * self.s

    @property
    def n_multi_indices(self) -> int:
        """|K^N| = s^r"""
        return self.s ** self.r

    @property
    def n_corners(self) -> int:
        return 2 ** self.r

    @property
    def dims(self) -> Tuple[int, int]:
        return (self.r, self.s)

    def multi_indices(self) -> List[Tuple[int, ...]]:
        """K^N in mixed-radix order (base s, r digits, last group fastest)"""
        return [tuple(row) for row in multi_index_table(self.r, self.s)]

    def check(self, values: np.ndarray, what: str = "point") -> np.ndarray:
        if values.shape[-2:] != self.dims:
            raise ShapeMismatchError(
                f"{what} has trailing shape {values.shape[-2:]}, expected {self.dims}"
            )
        return values


@lru_cache(maxsize=None)
def multi_index_table(r: int, s: int) -> np.ndarray:
    """(s^r, r) integer table of K^N multi-indices"""
    table = np.array(list(itertools.product(range(s), repeat=r)), dtype=np.intp)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def mask_table(r: int) -> np.ndarray:
    """(2^r, r) boolean table; row M has column n set iff group n is in M"""
    bits = np.arange(2 ** r)[:, None]
    table = ((bits >> np.arange(r)[None, :]) & 1).astype(bool)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def corner_signs(r: int) -> np.ndarray:
    """(-1)^|M| for every mask in ascending bitmask order"""
    signs = np.where(mask_table(r).sum(axis=1) % 2 == 0, 1.0, -1.0)
    signs.setflags(write=False)
    return signs


@dataclass(frozen=True, eq=False)
class Point:
    """An element of V^N, identified with R^L"""
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim != 2:
            raise ShapeMismatchError(f"point must be an (r, s) array, got ndim={arr.ndim}")
        IndexShape(*arr.shape)
        if not np.all(np.isfinite(arr)):
            raise ValueError("point coordinates must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_flat(cls, values, shape: IndexShape) -> "Point":
        return cls(np.asarray(values, dtype=float).reshape(shape.dims))

    @classmethod
    def zeros(cls, shape: IndexShape) -> "Point":
        return cls(np.zeros(shape.dims))

    @property
    def shape(self) -> IndexShape:
        return IndexShape(*self.values.shape)

    def group(self, n: int) -> np.ndarray:
        return self.values[n].copy()

    def restrict(self, groups) -> np.ndarray:
        """x|_M as an (|M|, s) array"""
        return self.values[list(groups)].copy()

    def norm(self) -> float:
        """Euclidean norm on R^L"""
        return float(np.linalg.norm(self.values))

    def flat(self) -> np.ndarray:
        return self.values.ravel().copy()

    def __add__(self, other: "Point") -> "Point":
        _require_same_shape(self, other)
        return Point(self.values + other.values)

    def __sub__(self, other: "Point") -> "Point":
        _require_same_shape(self, other)
        return Point(self.values - other.values)

    def __eq__(self, other) -> bool:
        return isinstance(other, Point) and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash((self.values.shape, self.values.tobytes()))

    def __repr__(self) -> str:
        return f"Point({self.values.tolist()})"

PointLike = Union[Point, np.ndarray, list, tuple, float]


def as_array(x: PointLike, shape: IndexShape) -> np.ndarray:
    """Coerce a Point or array-like into a float array shaped (..., r, s)"""
    if isinstance(x, Point):
        arr = x.values
    else:
        arr = np.asarray(x, dtype=float)
        if arr.ndim < 2 and arr.size == shape.size:
            arr = arr.reshape(shape.dims)
    return shape.check(arr)


def _require_same_shape(x: Point, y: Point):
    if x.values.shape != y.values.shape:
        raise ShapeMismatchError(
            f"points have different shapes {x.values.shape} and {y.values.shape}"
        )


@dataclass(frozen=True)
class CornerMask:
    """A subset M of N encoded as an r-bit mask (bit n <-> group n)"""
    bits: int
    r: int

    def __post_init__(self):
        if not 0 <= self.bits < 2 ** self.r:
            raise ShapeMismatchError(f"mask {self.bits} is not a subset of {self.r} groups")

    @classmethod
    def from_members(cls, members, r: int) -> "CornerMask":
        bits = 0
        for n in members:
            if not 0 <= n < r:
                raise ShapeMismatchError(f"group {n} out of range for r={r}")
            bits |= 1 << n
        return cls(bits, r)

    @property
    def members(self) -> frozenset:
        return frozenset(n for n in range(self.r) if self.bits >> n & 1)

    def contains(self, n: int) -> bool:
        return bool(self.bits >> n & 1)

    @property
    def sign(self) -> float:
        return -1.0 if bin(self.bits).count("1") % 2 else 1.0

    def complement(self) -> "CornerMask":
        return CornerMask((2 ** self.r - 1) ^ self.bits, self.r)


def all_masks(r: int) -> Iterator[CornerMask]:
    for bits in range(2 ** r):
        yield CornerMask(bits, r)


def select_corner(x: Point, y: Point, mask: CornerMask) -> Point:
    """pi_M(x, y): group n from x if n in M, else from y"""
    _require_same_shape(x, y)
    if mask.r != x.shape.r:
        raise ShapeMismatchError(f"mask over {mask.r} groups, points have {x.shape.r}")
    take_x = mask_table(mask.r)[mask.bits]
    return Point(np.where(take_x[:, None], x.values, y.values))


def corner_set(x: Point, y: Point) -> List[Tuple[CornerMask, Point]]:
    """All 2^r corners Pi(x, y) in ascending bitmask order"""
    _require_same_shape(x, y)
    return [(mask, select_corner(x, y, mask)) for mask in all_masks(x.shape.r)]


def corner_points(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Batched corners: (..., r, s) pairs -> (..., 2^r, r, s)"""
    if x.shape != y.shape:
        raise ShapeMismatchError(f"point batches differ: {x.shape} vs {y.shape}")
    r = x.shape[-2]
    take_x = mask_table(r)[:, :, None]
    return np.where(take_x, x[..., None, :, :], y[..., None, :, :])


def substitute_axis(x: Point, m: int, v) -> Point:
    """(v, x)_m: copy of x with group m replaced by v"""
    r, s = x.values.shape
    if not 0 <= m < r:
        raise ShapeMismatchError(f"group index {m} out of range for r={r}")
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != s:
        raise ShapeMismatchError(f"group value has {v.size} coordinates, expected {s}")
    values = x.values.copy()
    values[m] = v
    return Point(values)


def group_norms(u: np.ndarray) -> np.ndarray:
    """||u_n|| per group, batched"""
    return np.linalg.norm(u, axis=-1)


def group_norm_product(u: PointLike) -> Union[float, np.ndarray]:
    """||u||^N = prod_n ||u_n||"""
    arr = u.values if isinstance(u, Point) else np.asarray(u, dtype=float)
    result = np.prod(group_norms(arr), axis=-1)
    return float(result) if np.ndim(result) == 0 else result


class BoxKind(str, Enum):
    """Closed P(a, b) or half-open Q(a, b)"""
    CLOSED = "closed"
    HALF_OPEN = "half_open"


def precedes(a: PointLike, b: PointLike, strict: bool = False) -> bool:
    """a ⪯ b (a in P(0, b)); with strict=True, a ≺ b (a in Q(0, b))"""
    a = a.values if isinstance(a, Point) else np.asarray(a, dtype=float)
    b = b.values if isinstance(b, Point) else np.asarray(b, dtype=float)
    if np.any(a < 0):
        return False
    return bool(np.all(a < b)) if strict else bool(np.all(a <= b))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in R^L; for s = 1 this is P(lo, hi) or Q(lo, hi)"""
    lo: Point
    hi: Point
    kind: BoxKind = BoxKind.CLOSED

    def __post_init__(self):
        _require_same_shape(self.lo, self.hi)
        if np.any(self.lo.values > self.hi.values):
            raise OrderError("box needs lo <= hi componentwise")

    @classmethod
    def unit(cls, shape: IndexShape, kind: BoxKind = BoxKind.CLOSED) -> "Box":
        return cls(Point.zeros(shape), Point(np.ones(shape.dims)), kind)

    @property
    def shape(self) -> IndexShape:
        return self.lo.shape

    @property
    def widths(self) -> np.ndarray:
        return self.hi.values - self.lo.values

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.widths))

    @property
    def center(self) -> Point:
        return Point((self.lo.values + self.hi.values) / 2.0)

    @property
    def is_nonnegative(self) -> bool:
        return bool(np.all(self.lo.values >= 0))

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Membership for a batch (..., r, s); half-open boxes exclude hi"""
        lo, hi = self.lo.values, self.hi.values
        inside = x >= lo
        inside &= (x < hi) if self.kind == BoxKind.HALF_OPEN else (x <= hi)
        return np.all(inside, axis=(-2, -1))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.lo.values + rng.random((count,) + self.lo.values.shape) * self.widths


@dataclass(frozen=True, eq=False)
class MultilinearForm:
    """lambda in R^{K^N}, stored as a tensor of shape (s,)*r"""
    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if len(set(arr.shape)) != 1:
            raise ShapeMismatchError(f"coefficient tensor must be (s,)*r, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("form coefficients must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def from_flat(cls, values, shape: IndexShape) -> "MultilinearForm":
        return cls(np.asarray(values, dtype=float).reshape((shape.s,) * shape.r))

    @classmethod
    def zeros(cls, shape: IndexShape) -> "MultilinearForm":
        return cls(np.zeros((shape.s,) * shape.r))

    @property
    def shape(self) -> IndexShape:
        return IndexShape(self.coeffs.ndim, self.coeffs.shape[0])

    def flat(self) -> np.ndarray:
        return self.coeffs.ravel().copy()

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def evaluate(self, u: np.ndarray) -> np.ndarray:
        """lambda u^N for a batch (..., r, s)"""
        shape = self.shape
        u = shape.check(np.asarray(u, dtype=float))
        table = multi_index_table(shape.r, shape.s)
        # monomials[..., j] = prod_n u[..., n, k_n(j)]
        monomials = np.prod(u[..., np.arange(shape.r), table], axis=-1)
        return monomials @ self.flat()

    def __add__(self, other: "MultilinearForm") -> "MultilinearForm":
        return MultilinearForm(self.coeffs + other.coeffs)

    def __sub__(self, other: "MultilinearForm") -> "MultilinearForm":
        return MultilinearForm(self.coeffs - other.coeffs)

    def scaled(self, factor: float) -> "MultilinearForm":
        return MultilinearForm(self.coeffs * factor)

    def allclose(self, other: "MultilinearForm", atol: float = 1e-12) -> bool:
        return self.coeffs.shape == other.coeffs.shape and bool(
            np.allclose(self.coeffs, other.coeffs, rtol=0.0, atol=atol)
        )

    def __repr__(self) -> str:
        return f"MultilinearForm({self.coeffs.tolist()})"


def eval_form(form: MultilinearForm, u: PointLike) -> float:
    """lambda u^N = sum_k lambda_k prod_n u_{n, k_n}"""
    arr = u.values if isinstance(u, Point) else np.asarray(u, dtype=float)
    if arr.shape != form.shape.dims:
        raise ShapeMismatchError(f"form over {form.shape.dims}, point {arr.shape}")
    return float(form.evaluate(arr))

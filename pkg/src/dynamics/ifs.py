"""
Affine iterated function systems gamma^i(x) = (alpha^i_n x_n + a^i_n)_n

Maps scale each group by a scalar, so a system is stored as two arrays:
alphas shaped (|I|, r) and anchors a^i = gamma^i(0) shaped (|I|, r, s).
Words i = (i_1, ..., i_p) compose as gamma^{i_1} o ... o gamma^{i_p}.
"""
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple
import itertools
import math

import numpy as np
import structlog

from config import settings
from ..core.geometry import Box, IndexShape, Point, corner_points
from ..models.report import HypothesisReport
from ..utils.errors import BudgetExceededError, ConfigurationError, ShapeMismatchError
from ..utils.metrics import words_enumerated_total

logger = structlog.get_logger(__name__)


@dataclass(frozen=True, eq=False)
class AffineMap:
    """One map gamma^i with per-group contraction alpha and anchor a = gamma(0)"""
    alpha: np.ndarray
    anchor: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        anchor = np.array(self.anchor, dtype=float)
        if anchor.ndim != 2 or anchor.shape[0] != alpha.size:
            raise ShapeMismatchError(
                f"anchor shape {anchor.shape} does not match {alpha.size} group scalars"
            )
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(anchor))):
            raise ConfigurationError("map coefficients must be finite")
        if np.any(alpha <= 0):
            raise ConfigurationError(f"group scalars must be positive, got {alpha.tolist()}")
        alpha.setflags(write=False)
        anchor.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "anchor", anchor)

    @property
    def shape(self) -> IndexShape:
        return IndexShape(*self.anchor.shape)

    @property
    def beta(self) -> float:
        return float(np.prod(self.alpha))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.alpha[:, None] * x + self.anchor

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return (x - self.anchor) / self.alpha[:, None]


@dataclass(frozen=True)
class Tile:
    """The attractor T: a box, or a bounding box with a declared volume"""
    box: Box
    volume: float
    is_box: bool = True

    def __post_init__(self):
        if self.volume < 0 or not math.isfinite(self.volume):
            raise ConfigurationError(f"tile volume must be finite and >= 0, got {self.volume}")
        if self.volume > self.box.volume * (1 + 1e-12):
            raise ConfigurationError("tile volume exceeds its bounding box")

    @classmethod
    def from_box(cls, box: Box) -> "Tile":
        return cls(box, box.volume, True)

    @classmethod
    def unit(cls, shape: IndexShape) -> "Tile":
        return cls.from_box(Box.unit(shape))

    @property
    def shape(self) -> IndexShape:
        return self.box.shape

    @property
    def diameter(self) -> float:
        """diam T; for non-box tiles the bounding-box diameter, an upper bound"""
        return self.box.diameter

    def contains(self, x: np.ndarray, atol: float = 0.0) -> np.ndarray:
        lo, hi = self.box.lo.values, self.box.hi.values
        return np.all((x >= lo - atol) & (x <= hi + atol), axis=(-2, -1))


def as_tile(tile) -> Tile:
    if isinstance(tile, Tile):
        return tile
    if isinstance(tile, Box):
        return Tile.from_box(tile)
    raise ConfigurationError(f"expected a Tile or Box, got {type(tile).__name__}")


@dataclass(frozen=True, eq=False)
class MultiIndexMap:
    """gamma^i for a word i; the empty word is the identity"""
    word: Tuple[int, ...]
    alpha: np.ndarray
    anchor: np.ndarray

    @classmethod
    def identity(cls, shape: IndexShape) -> "MultiIndexMap":
        return cls((), np.ones(shape.r), np.zeros(shape.dims))

    @property
    def beta(self) -> float:
        return float(np.prod(self.alpha))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.alpha[:, None] * np.asarray(x, dtype=float) + self.anchor

    def then(self, inner: "MultiIndexMap") -> "MultiIndexMap":
        """self o inner, whose word is self.word ++ inner.word"""
        return MultiIndexMap(
            self.word + inner.word,
            self.alpha * inner.alpha,
            self.apply(inner.anchor)
        )


@dataclass(frozen=True)
class WordTable:
    """All words of one length as arrays, in lexicographic order"""
    depth: int
    alphas: np.ndarray   # (W, r)
    anchors: np.ndarray  # (W, r, s)

    @property
    def betas(self) -> np.ndarray:
        return np.prod(self.alphas, axis=-1)

    @property
    def volume_weights(self) -> np.ndarray:
        """mu(T^w) / mu(T) = (beta^w)^s"""
        return self.betas ** self.anchors.shape[-1]

    def __len__(self) -> int:
        return len(self.alphas)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """gamma^w(x) for every word: (..., r, s) -> (W, ..., r, s)"""
        extra = (None,) * (np.ndim(x) - 2)
        alphas = self.alphas[(slice(None),) + extra + (slice(None), None)]
        anchors = self.anchors[(slice(None),) + extra]
        return alphas * x + anchors


class AffineIFS:
    """A finite family of affine maps on V^N together with its tile T"""

    def __init__(
        self,
        shape: IndexShape,
        maps: Sequence[AffineMap],
        tile: Tile,
        name: str = "ifs"
    ):
        if len(maps) < 2:
            raise ConfigurationError(f"an IFS needs at least two maps, got {len(maps)}")
        for i, m in enumerate(maps):
            if m.shape != shape:
                raise ShapeMismatchError(f"map {i} acts on {m.shape.dims}, expected {shape.dims}")
        if tile.shape != shape:
            raise ShapeMismatchError(f"tile lives in {tile.shape.dims}, expected {shape.dims}")
        self.shape = shape
        self.maps = list(maps)
        self.tile = tile
        self.name = name
        self.alphas = np.stack([m.alpha for m in self.maps])
        self.anchors = np.stack([m.anchor for m in self.maps])
        self.alphas.setflags(write=False)
        self.anchors.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.maps)

    @property
    def q(self) -> float:
        """q = sup_{i,n} alpha^i_n"""
        return float(self.alphas.max())

    @property
    def betas(self) -> np.ndarray:
        return np.prod(self.alphas, axis=-1)

    @property
    def beta_sum(self) -> float:
        return math.fsum(self.betas)

    @property
    def volume_weights(self) -> np.ndarray:
        """mu(gamma^i(T)) / mu(T) = (beta^i)^s; the operator itself weighs by beta^i"""
        return self.betas ** self.shape.s

    @property
    def volume_sum(self) -> float:
        return math.fsum(self.volume_weights)

    def apply_all(self, x: np.ndarray) -> np.ndarray:
        """gamma^i(x) for every map: (..., r, s) -> (|I|, ..., r, s)"""
        return WordTable(1, self.alphas, self.anchors).apply(np.asarray(x, dtype=float))

    def image_boxes(self) -> Tuple[np.ndarray, np.ndarray]:
        """Corners gamma^i(lo_T), gamma^i(hi_T) of the image cells"""
        lo = self.apply_all(self.tile.box.lo.values)
        hi = self.apply_all(self.tile.box.hi.values)
        return lo, hi

    def __repr__(self) -> str:
        return f"AffineIFS({self.name}, |I|={self.size}, shape={self.shape.dims})"


def make_padic(shape: IndexShape, base: int) -> AffineIFS:
    """I = {0..base-1}^L, gamma^i(x) = (x + i) / base on T = [0, 1]^L"""
    if int(base) != base or base < 2:
        raise ConfigurationError(f"p-adic base must be an integer >= 2, got {base}")
    base = int(base)
    alpha = np.full(shape.r, 1.0 / base)
    maps = [
        AffineMap(alpha, np.asarray(digits, dtype=float).reshape(shape.dims) / base)
        for digits in itertools.product(range(base), repeat=shape.size)
    ]
    return AffineIFS(shape, maps, Tile.unit(shape), name=f"padic{base}_r{shape.r}s{shape.s}")


def make_explicit(
    shape: IndexShape,
    maps: Sequence[Tuple[Sequence[float], Sequence]],
    tile_lo: Sequence,
    tile_hi: Sequence,
    volume: Optional[float] = None,
    is_box: bool = True,
    name: str = "explicit"
) -> AffineIFS:
    """Build an IFS from (alpha per group, anchor) pairs and a tile descriptor"""
    built = [
        AffineMap(alpha, np.asarray(anchor, dtype=float).reshape(shape.dims))
        for alpha, anchor in maps
    ]
    box = Box(Point.from_flat(tile_lo, shape), Point.from_flat(tile_hi, shape))
    if is_box and volume is not None and not math.isclose(volume, box.volume, rel_tol=1e-12):
        raise ConfigurationError("a box tile's volume is its box volume")
    tile = Tile(box, box.volume if volume is None else float(volume), is_box)
    return AffineIFS(shape, built, tile, name=name)


def compose(ifs: AffineIFS, word: Sequence[int]) -> MultiIndexMap:
    """gamma^{i_1} o ... o gamma^{i_p}"""
    result = MultiIndexMap.identity(ifs.shape)
    for i in reversed(tuple(word)):
        if not 0 <= i < ifs.size:
            raise ConfigurationError(f"word entry {i} is not a map index (|I|={ifs.size})")
        m = ifs.maps[i]
        result = MultiIndexMap((int(i),), m.alpha, m.anchor).then(result)
    return result


def _check_word_budget(ifs: AffineIFS, p: int, budget: Optional[int]) -> int:
    if p < 0:
        raise ValueError(f"depth must be >= 0, got {p}")
    budget = settings.word_budget if budget is None else budget
    count = ifs.size ** p
    if count > budget:
        logger.warning("Word budget exceeded", system=ifs.name, depth=p, words=count, budget=budget)
        raise BudgetExceededError(f"|I|^p with |I|={ifs.size}, p={p}", count, budget)
    return count


def enumerate_words(ifs: AffineIFS, p: int, budget: Optional[int] = None) -> Iterator[MultiIndexMap]:
    """All |I|^p composed maps in lexicographic word order"""
    _check_word_budget(ifs, p, budget)
    for word in itertools.product(range(ifs.size), repeat=p):
        words_enumerated_total.inc()
        yield compose(ifs, word)


def word_arrays(ifs: AffineIFS, p: int, budget: Optional[int] = None) -> WordTable:
    """Vectorised form of enumerate_words; row j is the j-th word in lexicographic order"""
    count = _check_word_budget(ifs, p, budget)
    r, s = ifs.shape.dims
    alphas = np.ones((1, r))
    anchors = np.zeros((1, r, s))
    for _ in range(p):
        # Prepend a letter: gamma^i o gamma^w
        alphas = (ifs.alphas[:, None, :] * alphas[None]).reshape(-1, r)
        anchors = (
            ifs.alphas[:, None, :, None] * anchors[None] + ifs.anchors[:, None]
        ).reshape(-1, r, s)
    words_enumerated_total.inc(count)
    return WordTable(p, alphas, anchors)


def cell_diameter_bound(ifs: AffineIFS, p: int) -> float:
    """sup over words of length p of diam T^i <= q^p diam T"""
    if p < 0:
        raise ValueError(f"depth must be >= 0, got {p}")
    return ifs.q ** p * ifs.tile.diameter


def dedup_points(points: np.ndarray, tolerance: float) -> np.ndarray:
    """Drop points within ``tolerance`` of an earlier one (grid-quantized), keeping first occurrences"""
    flat = points.reshape(len(points), -1)
    keys = np.round(flat / tolerance).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return points[np.sort(first)]


def minimal_admissible_points(
    ifs: AffineIFS,
    depth: int,
    budget: Optional[int] = None,
    tolerance: Optional[float] = None
) -> np.ndarray:
    """S_k: S_0 = {0}, S_{k+1} = S_k plus the corner sets of (gamma^i(0), gamma^i(x)), x in S_k"""
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    budget = settings.admissible_budget if budget is None else budget
    tolerance = settings.dedup_tolerance if tolerance is None else tolerance
    r, s = ifs.shape.dims
    points = np.zeros((1, r, s))

    for level in range(depth):
        candidates = len(points) * (1 + ifs.size * 2 ** r)
        if candidates > budget:
            logger.warning("Admissible set budget exceeded", level=level, candidates=candidates)
            raise BudgetExceededError(f"|S_{level + 1}| candidates", candidates, budget)
        images = ifs.apply_all(points)  # (|I|, n, r, s)
        origins = np.broadcast_to(ifs.anchors[:, None], images.shape)
        corners = corner_points(origins, images).reshape(-1, r, s)
        points = dedup_points(np.concatenate([points, corners]), tolerance)
        logger.debug("Admissible level expanded", level=level + 1, points=len(points))

    return points


def _box_pair_overlap(lo: np.ndarray, hi: np.ndarray) -> float:
    """Largest pairwise intersection volume among the image boxes"""
    n = len(lo)
    lo = lo.reshape(n, -1)
    hi = hi.reshape(n, -1)
    best = 0.0
    for i in range(n - 1):
        widths = np.minimum(hi[i], hi[i + 1:]) - np.maximum(lo[i], lo[i + 1:])
        volumes = np.prod(np.clip(widths, 0.0, None), axis=-1)
        best = max(best, float(volumes.max()))
    return best


def validate_hypotheses(
    ifs: AffineIFS,
    samples: Optional[int] = None,
    seed: int = 0
) -> HypothesisReport:
    """Check H1 (q < 1), the tiling hypothesis H2 and the lower-set hypothesis H3"""
    samples = settings.default_samples if samples is None else samples
    rng = np.random.default_rng(seed)
    tile = ifs.tile
    box = tile.box
    r = ifs.shape.r
    mu = tile.volume
    threshold = settings.overlap_threshold * max(mu, np.finfo(float).tiny)

    q = ifs.q
    h1_pass = q < 1.0

    beta_sum = ifs.beta_sum
    beta_deviation = abs(beta_sum - 1.0)
    beta_pass = beta_deviation <= settings.beta_tolerance

    img_lo, img_hi = ifs.image_boxes()

    overlap_exact = None
    if tile.is_box:
        overlap_exact = _box_pair_overlap(img_lo, img_hi)
        points = box.sample(rng, samples)
        multiplicity = np.zeros(samples, dtype=np.int64)
        for i in range(ifs.size):
            multiplicity += np.all((points >= img_lo[i]) & (points < img_hi[i]), axis=(-2, -1))
        overlap_mc = float(np.maximum(multiplicity - 1, 0).mean()) * mu
        coverage_defect = float((multiplicity == 0).mean()) * mu
        overlap_pass = overlap_exact <= threshold and overlap_mc <= threshold
        coverage_pass = coverage_defect <= threshold
    else:
        # Only the bounding box is known; volume bookkeeping is the available check
        logger.warning("Non-box tile: overlap and coverage not sampled", system=ifs.name)
        volume_sum = ifs.volume_sum
        overlap_mc = max(0.0, (volume_sum - 1.0) * mu)
        coverage_defect = max(0.0, (1.0 - volume_sum) * mu)
        overlap_pass = overlap_mc <= threshold
        coverage_pass = coverage_defect <= threshold

    atol = 1e-12 * max(1.0, float(np.abs(box.hi.values).max()), float(np.abs(box.lo.values).max()))
    containment_pass = bool(
        np.all(img_lo >= box.lo.values - atol) and np.all(img_hi <= box.hi.values + atol)
    )

    origin = np.zeros(ifs.shape.dims)
    zero_in_tile = bool(tile.contains(origin, atol))
    admissible_pass = zero_in_tile
    sampled = box.sample(rng, min(samples, 2_000))
    if admissible_pass:
        for i in range(ifs.size):
            images = ifs.maps[i].apply(sampled)
            origins = np.broadcast_to(ifs.anchors[i], images.shape)
            if not np.all(tile.contains(corner_points(origins, images), atol)):
                admissible_pass = False
                break

    h3_nonnegative = box.is_nonnegative
    lower = sampled * rng.random(sampled.shape)
    h3_lower_set = zero_in_tile and bool(np.all(tile.contains(lower, atol)))
    h3_pass = h3_nonnegative and h3_lower_set

    flags = {
        "h1": h1_pass,
        "beta_sum": beta_pass,
        "overlap": overlap_pass,
        "coverage": coverage_pass,
        "containment": containment_pass,
        "admissible": admissible_pass,
        "h3": h3_pass,
    }
    failures = [name for name, ok in flags.items() if not ok]
    report = HypothesisReport(
        system=ifs.name,
        n_maps=ifs.size,
        q=q,
        h1_pass=h1_pass,
        beta_sum=beta_sum,
        beta_deviation=beta_deviation,
        beta_pass=beta_pass,
        volume_sum=ifs.volume_sum,
        overlap_volume_exact=overlap_exact,
        overlap_volume_mc=overlap_mc,
        overlap_pass=overlap_pass,
        coverage_defect=coverage_defect,
        coverage_pass=coverage_pass,
        containment_pass=containment_pass,
        admissible_pass=admissible_pass,
        h3_nonnegative=h3_nonnegative,
        h3_lower_set=h3_lower_set,
        h3_pass=h3_pass,
        samples=samples,
        seed=seed,
        failures=failures,
        all_pass=not failures,
    )
    logger.info("Hypotheses checked", system=ifs.name, all_pass=report.all_pass, failures=failures)
    return report

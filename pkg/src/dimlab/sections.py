"""Slices, projections, and lower box dimension estimates.

A slice through offset x in direction w is the affine (d-1)-flat
{y : <y, w> = x}.  Counting is always against cylinder disks, so the test
"cylinder meets the flat" is the exact one-dimensional check
|<center, w> - x| <= radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DepthMismatchError,
    InsufficientDataError,
    OutOfRangeError,
    ParameterError,
)
from .geometry import DEFAULT_BUDGET, IFS, StoppingSet, moran_dimension, stopping_set
from .percolation import PercolationSample, standard_law, sample_tree
from . import rng

__all__ = [
    "Direction",
    "CellCloud",
    "slice_counts",
    "count_slice",
    "DimEstimate",
    "fit_loglog",
    "section_dim",
    "interval_union_length",
    "projection_measure",
    "ConservationProfile",
    "conservation_profile",
    "conservation_profile_sample",
    "ProbeResult",
    "probe_sections",
    "box_count_estimate",
]


@dataclass(eq=False)
class Direction:
    """A unit vector spanning the line we project onto."""

    vector: np.ndarray
    angle: float | None = None

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        n = float(np.linalg.norm(self.vector))
        if abs(n - 1.0) > 1e-12:
            raise ParameterError("direction vector must be unit length")

    @classmethod
    def from_angle(cls, beta: float) -> "Direction":
        return cls(vector=np.array([math.cos(beta), math.sin(beta)]), angle=float(beta))

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


@dataclass(eq=False)
class CellCloud:
    """Disks standing in for a family of cylinders at one scale."""

    centers: np.ndarray
    radii: np.ndarray
    scale: float

    @classmethod
    def from_stopping_set(cls, ss: StoppingSet) -> "CellCloud":
        return cls(centers=ss.centers, radii=ss.radii, scale=ss.rho)

    @classmethod
    def from_sample(
        cls,
        sample: PercolationSample,
        ifs: IFS,
        rho: float,
        persistent: bool = False,
    ) -> "CellCloud":
        k = generation_for_scale(sample, ifs, rho)
        centers, radii = sample.cell_cloud(ifs, k, persistent=persistent)
        return cls(centers=centers, radii=radii, scale=rho)

    def project(self, direction: Direction) -> np.ndarray:
        return self.centers @ direction.vector


def generation_for_scale(sample: PercolationSample, ifs: IFS, rho: float) -> int:
    """Coarsest generation whose cell diameters are all <= rho."""
    rmax = float(ifs.ratios.max())
    diam = ifs.diameter_proxy
    k = 0
    # slack absorbs ulp drift between this running product and scales built
    # as diameter_proxy * rmax**k, which need not round identically
    while diam > rho * (1.0 + 1e-12):
        diam *= rmax
        k += 1
    if k > sample.depth:
        raise DepthMismatchError(
            f"scale {rho:.3g} needs generation {k}, sample depth is {sample.depth}"
        )
    return k


def slice_counts(cloud: CellCloud, direction: Direction, xs) -> np.ndarray:
    """How many disks each flat {<y,w> = x} meets (boundary touching counts)."""
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    proj = cloud.project(direction)
    lo = np.sort(proj - cloud.radii)
    hi = np.sort(proj + cloud.radii)
    return np.searchsorted(lo, xs, side="right") - np.searchsorted(hi, xs, side="left")


def count_slice(
    ifs: IFS, direction: Direction, x: float, rho: float, budget: int = DEFAULT_BUDGET
) -> int:
    """N(x, rho): stopping-set cylinders whose disk meets the flat at x."""
    if direction.dim != ifs.ambient_dim:
        raise ParameterError("direction dimension mismatch")
    cloud = CellCloud.from_stopping_set(stopping_set(ifs, rho, budget=budget))
    return int(slice_counts(cloud, direction, [x])[0])


# ---------------------------------------------------------------------------
# log-log regression


@dataclass(eq=False)
class DimEstimate:
    slope: float
    intercept: float
    r2: float
    scales: np.ndarray
    log_counts: np.ndarray
    n_dropped: int


def fit_loglog(scales, counts) -> DimEstimate:
    """Least-squares slope of log(count) against log(1/scale).

    Zero counts are dropped; fewer than three surviving scales raise
    InsufficientDataError.
    """
    scales = np.asarray(scales, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    if scales.shape != counts.shape:
        raise ParameterError("scales and counts must align")
    keep = counts > 0
    n_dropped = int(np.count_nonzero(~keep))
    scales, counts = scales[keep], counts[keep]
    if len(scales) < 3:
        raise InsufficientDataError(
            f"only {len(scales)} non-empty scales; need at least 3"
        )
    x = np.log(1.0 / scales)
    y = np.log(counts)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-30:
        r2 = 1.0 if ss_res <= 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return DimEstimate(
        slope=float(slope),
        intercept=float(intercept),
        r2=float(r2),
        scales=scales,
        log_counts=y,
        n_dropped=n_dropped,
    )


def _clouds_for_ifs(ifs, scales, budget) -> list:
    return [
        CellCloud.from_stopping_set(stopping_set(ifs, rho, budget=budget))
        for rho in scales
    ]


def _clouds_for_sample(sample, ifs, scales, persistent=False) -> list:
    return [
        CellCloud.from_sample(sample, ifs, rho, persistent=persistent)
        for rho in scales
    ]


def section_dim(
    ifs: IFS,
    direction: Direction,
    x: float,
    scales,
    budget: int = DEFAULT_BUDGET,
) -> DimEstimate:
    """Lower box dimension estimate of the slice through x."""
    clouds = _clouds_for_ifs(ifs, scales, budget)
    counts = np.array([slice_counts(c, direction, [x])[0] for c in clouds])
    return fit_loglog(np.asarray(scales, dtype=np.float64), counts)


# ---------------------------------------------------------------------------
# projections


def interval_union_length(lo, hi) -> float:
    """Total length of a union of intervals [lo_i, hi_i] (sweep merge)."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if len(lo) == 0:
        return 0.0
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    run_hi = np.maximum.accumulate(hi)
    # component starts where the next interval opens past everything seen
    new_comp = np.empty(len(lo), dtype=bool)
    new_comp[0] = True
    new_comp[1:] = lo[1:] > run_hi[:-1]
    starts = np.flatnonzero(new_comp)
    ends = np.append(starts[1:], len(lo)) - 1
    return float(np.sum(run_hi[ends] - lo[starts]))


def _merged_intervals(lo, hi):
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if len(lo) == 0:
        return np.zeros(0), np.zeros(0)
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    run_hi = np.maximum.accumulate(hi)
    new_comp = np.empty(len(lo), dtype=bool)
    new_comp[0] = True
    new_comp[1:] = lo[1:] > run_hi[:-1]
    starts = np.flatnonzero(new_comp)
    ends = np.append(starts[1:], len(lo)) - 1
    return lo[starts], run_hi[ends]


def projection_measure(
    source,
    direction: Direction,
    rho: float,
    ifs: IFS | None = None,
    budget: int = DEFAULT_BUDGET,
) -> float:
    """Length of the projection of the scale-rho disk covering onto w.

    For an IFS the covering is the stopping set at rho; for a percolation
    sample it is the coarsest generation with cell diameters <= rho,
    restricted to cells that still have descendants at the deepest sampled
    generation.
    """
    if isinstance(source, IFS):
        cloud = CellCloud.from_stopping_set(stopping_set(source, rho, budget=budget))
    elif isinstance(source, PercolationSample):
        if ifs is None:
            raise ParameterError("sample projections need the ifs argument")
        cloud = CellCloud.from_sample(source, ifs, rho, persistent=True)
    else:
        raise ParameterError("source must be an IFS or a PercolationSample")
    proj = cloud.project(direction)
    return interval_union_length(proj - cloud.radii, proj + cloud.radii)


# ---------------------------------------------------------------------------
# conservation profiles


@dataclass(eq=False)
class ConservationProfile:
    """Slice-dimension slopes across a grid of offsets in one direction.

    `qualifying_fraction` is taken over offsets with a valid fit (at least
    three non-empty scales); offsets whose flats miss the covering entirely
    never enter the denominator.
    """

    direction: Direction
    epsilon: float
    threshold: float
    x_grid: np.ndarray
    slopes: np.ndarray
    r2: np.ndarray
    valid: np.ndarray
    qualifying: np.ndarray
    counts: np.ndarray = field(repr=False, default=None)

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    @property
    def qualifying_fraction(self) -> float:
        n = self.n_valid
        return float(self.qualifying.sum() / n) if n else 0.0

    @property
    def valid_fraction(self) -> float:
        return float(self.valid.mean()) if len(self.valid) else 0.0

    @property
    def qualifying_length(self) -> float:
        if len(self.x_grid) < 2:
            return 0.0
        cell = float(self.x_grid[1] - self.x_grid[0])
        return cell * float(self.qualifying.sum())


def _default_grid(ifs: IFS, direction: Direction, scales, grid: int) -> np.ndarray:
    mid = float(ifs.ball_center @ direction.vector)
    r0 = ifs.ball_radius
    trim = 2.0 * float(np.max(scales))
    lo, hi = mid - r0 + trim, mid + r0 - trim
    if hi <= lo:
        raise OutOfRangeError("scales too coarse for the enclosing ball")
    return np.linspace(lo, hi, grid)


def _profile_from_clouds(
    clouds, direction, epsilon, threshold_dim, x_grid, scales
) -> ConservationProfile:
    scales = np.asarray(scales, dtype=np.float64)
    counts = np.stack([slice_counts(c, direction, x_grid) for c in clouds])
    n_x = len(x_grid)
    slopes = np.full(n_x, np.nan)
    r2 = np.full(n_x, np.nan)
    valid = np.zeros(n_x, dtype=bool)
    for j in range(n_x):
        try:
            est = fit_loglog(scales, counts[:, j])
        except InsufficientDataError:
            continue
        slopes[j] = est.slope
        r2[j] = est.r2
        valid[j] = True
    threshold = threshold_dim - 1.0 - epsilon
    qualifying = valid & (slopes > threshold)
    return ConservationProfile(
        direction=direction,
        epsilon=epsilon,
        threshold=threshold,
        x_grid=x_grid,
        slopes=slopes,
        r2=r2,
        valid=valid,
        qualifying=qualifying,
        counts=counts,
    )


def conservation_profile(
    ifs: IFS,
    direction: Direction,
    epsilon: float,
    scales,
    grid: int = 512,
    x_grid=None,
    budget: int = DEFAULT_BUDGET,
) -> ConservationProfile:
    """Profile of slice slopes for the deterministic attractor.

    Qualifying offsets have slope above moran_dimension - 1 - epsilon.
    """
    if epsilon <= 0.0:
        raise ParameterError("epsilon must be positive")
    if x_grid is None:
        x_grid = _default_grid(ifs, direction, scales, grid)
    clouds = _clouds_for_ifs(ifs, scales, budget)
    return _profile_from_clouds(
        clouds, direction, epsilon, moran_dimension(ifs), np.asarray(x_grid), scales
    )


def conservation_profile_sample(
    sample: PercolationSample,
    ifs: IFS,
    dim_formula: float,
    direction: Direction,
    epsilon: float,
    scales,
    grid: int = 512,
    x_grid=None,
) -> ConservationProfile:
    """Same profile against the surviving cells of a percolation sample.

    dim_formula is the almost-sure dimension of the surviving set (from
    percolation_dimension); qualifying means slope > dim_formula - 1 - eps.
    """
    if epsilon <= 0.0:
        raise ParameterError("epsilon must be positive")
    if x_grid is None:
        x_grid = _default_grid(ifs, direction, scales, grid)
    clouds = _clouds_for_sample(sample, ifs, scales, persistent=False)
    return _profile_from_clouds(
        clouds, direction, epsilon, dim_formula, np.asarray(x_grid), scales
    )


# ---------------------------------------------------------------------------
# probing random sections


@dataclass(eq=False)
class ProbeResult:
    x_grid: np.ndarray
    hits: np.ndarray          # (trials, nx) bool
    survived: np.ndarray      # (trials,) bool: tree non-extinct at depth
    alpha: float
    depth: int

    @property
    def frequency(self) -> np.ndarray:
        return self.hits.mean(axis=0)


def probe_sections(
    ifs: IFS,
    alpha: float,
    direction: Direction,
    depth: int,
    trials: int,
    seed: int,
    grid: int = 512,
    x_grid=None,
    budget: int = DEFAULT_BUDGET,
) -> ProbeResult:
    """Monte Carlo line probing of standard(alpha) percolation.

    For each trial, a fresh sample is drawn and each grid offset records
    whether some surviving depth-`depth` cylinder disk meets its flat.
    """
    if x_grid is None:
        rho_ref = ifs.diameter_proxy * float(ifs.ratios.max()) ** depth
        x_grid = _default_grid(ifs, direction, [rho_ref], grid)
    x_grid = np.asarray(x_grid, dtype=np.float64)
    law = standard_law(ifs, alpha)
    hits = np.zeros((trials, len(x_grid)), dtype=bool)
    survived = np.zeros(trials, dtype=bool)
    for t in range(trials):
        sub = int(rng.derive_seed(np.uint64(seed), np.uint64(t)))
        sample = sample_tree(law, depth, sub, budget=budget)
        if sample.extinct:
            continue
        survived[t] = True
        centers, radii = sample.cell_cloud(ifs, depth)
        proj = centers @ direction.vector
        mlo, mhi = _merged_intervals(proj - radii, proj + radii)
        idx = np.searchsorted(mlo, x_grid, side="right") - 1
        inside = idx >= 0
        inside[inside] &= x_grid[inside] <= mhi[idx[inside]]
        hits[t] = inside
    return ProbeResult(
        x_grid=x_grid, hits=hits, survived=survived, alpha=alpha, depth=depth
    )


# ---------------------------------------------------------------------------
# box counting for percolation samples


def box_count_estimate(
    sample: PercolationSample,
    ifs: IFS,
    min_depth: int = 1,
    persistent: bool = True,
) -> DimEstimate:
    """Box-count slope of the deepest surviving generation.

    The count at generation k is the number of depth-k words that still have
    surviving descendants at the deepest generation (ancestor counts), i.e.
    the k-th level covering of the depth-n approximant.
    """
    counts = sample.persistent_counts() if persistent else sample.counts()
    rmax = float(ifs.ratios.max())
    depths = np.arange(min_depth, sample.depth + 1)
    scales = ifs.diameter_proxy * rmax ** depths.astype(np.float64)
    return fit_loglog(scales, counts[depths])

"""Fractal percolation on symbolic trees.

A percolation sample keeps, per depth, the set of words whose whole ancestor
path was retained.  Retention decisions are a pure function of (seed, word
path) via the counter-based PRF in `rng`, so samples are bit-for-bit
reproducible and independent of traversal order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import rng
from .errors import (
    BudgetExceededError,
    ParameterError,
    SubcriticalLawError,
    UnsupportedLawError,
)
from .geometry import DEFAULT_BUDGET, IFS, Similarity, word_geometry

__all__ = [
    "OffspringLaw",
    "standard_law",
    "uniform_law",
    "table_law",
    "deterministic_law",
    "PercolationSample",
    "sample_tree",
    "sample_surviving_tree",
    "intersect_samples",
    "BranchingStats",
    "survival_probability",
    "percolation_dimension",
    "MandelbrotConfig",
    "mandelbrot_config",
    "batch_generation_counts",
    "batch_intersection_counts",
    "path_survival",
]


@dataclass(eq=False)
class OffspringLaw:
    """Distribution of the random retained-children vector X in {0,1}^m.

    kinds:
      - "standard":        X_i independent Bernoulli(r_i^alpha)
      - "bernoulli-uniform": X_i independent Bernoulli(p)
      - "deterministic":   all children retained
      - "general-table":   explicit list of masks with probabilities
    """

    kind: str
    m: int
    retain: np.ndarray | None = None
    masks: np.ndarray | None = None
    mask_probs: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def independent(self) -> bool:
        return self.kind in ("standard", "bernoulli-uniform", "deterministic")

    def marginals(self) -> np.ndarray:
        """P(X_i = 1) for each symbol."""
        if self.independent:
            return self.retain
        return self.mask_probs @ self.masks

    def mean_offspring(self) -> float:
        return float(self.marginals().sum())

    def pgf(self, z: float) -> float:
        """E(z^{number of retained children})."""
        if self.independent:
            return float(np.prod(1.0 - self.retain + self.retain * z))
        pops = self.masks.sum(axis=1)
        return float(np.sum(self.mask_probs * np.power(float(z), pops)))

    def _cum_mask_probs(self) -> np.ndarray:
        if "cum" not in self.meta:
            self.meta["cum"] = np.cumsum(self.mask_probs)
        return self.meta["cum"]


def standard_law(ifs: IFS, alpha: float) -> OffspringLaw:
    """Retention probabilities r_i^alpha (alpha = 0 keeps everything)."""
    if alpha < 0.0:
        raise ParameterError("alpha must be >= 0")
    retain = ifs.ratios ** alpha
    return OffspringLaw(
        kind="standard", m=ifs.m, retain=retain, meta={"alpha": float(alpha)}
    )


def uniform_law(m: int, p: float) -> OffspringLaw:
    if not 0.0 <= p <= 1.0:
        raise ParameterError("p must lie in [0, 1]")
    if m < 1:
        raise ParameterError("m must be >= 1")
    return OffspringLaw(
        kind="bernoulli-uniform",
        m=m,
        retain=np.full(m, float(p)),
        meta={"p": float(p)},
    )


def deterministic_law(m: int) -> OffspringLaw:
    if m < 1:
        raise ParameterError("m must be >= 1")
    return OffspringLaw(kind="deterministic", m=m, retain=np.ones(m))


def table_law(masks, probs) -> OffspringLaw:
    masks = np.asarray(masks, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if masks.ndim != 2 or len(masks) != len(probs):
        raise ParameterError("masks must be (K, m) with matching probabilities")
    if np.any((masks != 0.0) & (masks != 1.0)):
        raise ParameterError("masks must be 0/1")
    if np.any(probs < 0.0) or abs(probs.sum() - 1.0) > 1e-12:
        raise ParameterError("mask probabilities must be >= 0 and sum to 1")
    return OffspringLaw(
        kind="general-table", m=masks.shape[1], masks=masks, mask_probs=probs
    )


# ---------------------------------------------------------------------------
# sampling


@dataclass(eq=False)
class _Generation:
    symbols: np.ndarray            # (n, k) uint16, symbols 1..m
    parent: np.ndarray | None      # (n,) int64 rows into previous generation
    hashes: np.ndarray | None      # (n,) uint64 path hashes


@dataclass(eq=False)
class PercolationSample:
    """Surviving words per depth; word in gen k iff its whole path retained."""

    law: OffspringLaw | None
    seed: object
    depth: int
    generations: list

    def counts(self) -> np.ndarray:
        return np.array([len(g.symbols) for g in self.generations], dtype=np.int64)

    @property
    def extinct(self) -> bool:
        return len(self.generations[-1].symbols) == 0

    def symbols_at(self, k: int) -> np.ndarray:
        return self.generations[k].symbols

    def words_at(self, k: int) -> list:
        return [tuple(int(s) for s in row) for row in self.generations[k].symbols]

    def persistent_masks(self) -> list:
        """Per generation, which words have descendants in the deepest one."""
        masks = [None] * len(self.generations)
        masks[-1] = np.ones(len(self.generations[-1].symbols), dtype=bool)
        for k in range(len(self.generations) - 1, 0, -1):
            gen = self.generations[k]
            if gen.parent is None:
                raise UnsupportedLawError("sample lacks parent links")
            prev = np.zeros(len(self.generations[k - 1].symbols), dtype=bool)
            if masks[k].any():
                prev[gen.parent[masks[k]]] = True
            masks[k - 1] = prev
        return masks

    def persistent_counts(self) -> np.ndarray:
        return np.array([int(m.sum()) for m in self.persistent_masks()], dtype=np.int64)

    def cell_cloud(self, ifs: IFS, k: int, persistent: bool = False):
        """(centers, radii) of the surviving depth-k cylinder disks."""
        if ifs.m != (self.law.m if self.law is not None else ifs.m):
            raise ParameterError("law arity does not match the IFS")
        sym = self.generations[k].symbols
        if persistent:
            sym = sym[self.persistent_masks()[k]]
        return word_geometry(ifs, sym)


def _expected_nodes(mean: float, depth: int) -> float:
    if abs(mean - 1.0) < 1e-12:
        return float(depth + 1)
    return (mean ** (depth + 1) - 1.0) / (mean - 1.0)


def _mask_rows(law: OffspringLaw, parent_hashes: np.ndarray) -> np.ndarray:
    """Boolean (n, m) retention matrix for a table law, one mask per parent."""
    u = rng.uniform_from_hash(parent_hashes, rng.SALT_MASK)
    idx = np.searchsorted(law._cum_mask_probs(), u, side="right")
    idx = np.minimum(idx, len(law.mask_probs) - 1)
    return law.masks[idx].astype(bool)


def sample_tree(
    law: OffspringLaw, depth: int, seed: int, budget: int = DEFAULT_BUDGET
) -> PercolationSample:
    """Sample the retained tree down to `depth`.

    Node decisions are keyed by (seed, word hash): two runs with the same
    arguments produce identical samples, and a word's fate never depends on
    its siblings.
    """
    if depth < 0:
        raise ParameterError("depth must be >= 0")
    mean = law.mean_offspring()
    expected = _expected_nodes(max(mean, 1.0), depth)
    if expected > budget:
        raise BudgetExceededError(expected, budget, what="expected nodes")

    m = law.m
    root = _Generation(
        symbols=np.zeros((1, 0), dtype=np.uint16),
        parent=np.full(1, -1, dtype=np.int64),
        hashes=rng.root_hash(np.uint64(seed)).reshape(1),
    )
    gens = [root]
    total = 1
    for k in range(depth):
        prev = gens[-1]
        n = len(prev.symbols)
        if n == 0:
            gens.append(
                _Generation(
                    symbols=np.zeros((0, k + 1), dtype=np.uint16),
                    parent=np.zeros(0, dtype=np.int64),
                    hashes=np.zeros(0, dtype=np.uint64),
                )
            )
            continue
        if total + n * m > budget:
            raise BudgetExceededError(total + n * m, budget, what="nodes")
        child_h = rng.child_hashes(prev.hashes, m)
        if law.independent:
            u = rng.uniform_from_hash(child_h, rng.SALT_RETAIN)
            keep = u < law.retain[None, :]
        else:
            keep = _mask_rows(law, prev.hashes)
        rows, cols = np.nonzero(keep)
        total += len(rows)
        symbols = np.empty((len(rows), k + 1), dtype=np.uint16)
        symbols[:, :k] = prev.symbols[rows]
        symbols[:, k] = (cols + 1).astype(np.uint16)
        gens.append(
            _Generation(
                symbols=symbols,
                parent=rows.astype(np.int64),
                hashes=child_h[rows, cols],
            )
        )
    return PercolationSample(law=law, seed=seed, depth=depth, generations=gens)


def sample_surviving_tree(
    law: OffspringLaw,
    depth: int,
    seed: int,
    max_tries: int = 1000,
    budget: int = DEFAULT_BUDGET,
):
    """Rejection-resample until the deepest generation is non-empty.

    Returns (sample, tries); raises after max_tries failures.
    """
    for t in range(max_tries):
        sub = int(rng.derive_seed(np.uint64(seed), np.uint64(t)))
        sample = sample_tree(law, depth, sub, budget=budget)
        if not sample.extinct:
            return sample, t + 1
    raise ParameterError(f"no surviving sample in {max_tries} tries (law too thin?)")


def _pack_codes(symbols: np.ndarray, m: int) -> np.ndarray:
    k = symbols.shape[1]
    if k * math.log2(max(m, 2)) > 62:
        raise BudgetExceededError(k * math.log2(m), 62, what="code bits")
    codes = np.zeros(len(symbols), dtype=np.int64)
    for j in range(k):
        codes = codes * m + (symbols[:, j].astype(np.int64) - 1)
    return codes


def intersect_samples(a: PercolationSample, b: PercolationSample) -> PercolationSample:
    """Per-depth intersection of two samples over the same alphabet.

    The result is again downward closed (a prefix of a common word is a
    common word), so parent links are rebuilt.
    """
    law = a.law if a.law is not None else b.law
    if law is None:
        raise ParameterError("at least one sample must carry its law")
    if a.depth != b.depth or (
        a.law is not None and b.law is not None and a.law.m != b.law.m
    ):
        raise ParameterError("samples must share alphabet and depth")
    m = law.m
    gens = []
    prev_codes = None
    for k in range(a.depth + 1):
        ca = _pack_codes(a.generations[k].symbols, m)
        cb = _pack_codes(b.generations[k].symbols, m)
        common = np.intersect1d(ca, cb)
        symbols = np.empty((len(common), k), dtype=np.uint16)
        rem = common.copy()
        for j in range(k - 1, -1, -1):
            symbols[:, j] = (rem % m + 1).astype(np.uint16)
            rem //= m
        parent = (
            np.searchsorted(prev_codes, common // m).astype(np.int64)
            if k
            else np.full(len(common), -1, dtype=np.int64)
        )
        gens.append(_Generation(symbols=symbols, parent=parent, hashes=None))
        prev_codes = common
    return PercolationSample(
        law=None, seed=(a.seed, b.seed), depth=a.depth, generations=gens
    )


# ---------------------------------------------------------------------------
# branching statistics and the dimension equation


@dataclass(eq=False)
class BranchingStats:
    mean_offspring: float
    extinction_prob: float
    survival_prob: float
    iterations: int
    residual: float


def survival_probability(law: OffspringLaw) -> BranchingStats:
    """Extinction probability as the least fixed point of the offspring PGF.

    Iterated from 0 until the step shrinks below 1e-12; at or below the
    critical mean the extinction probability is exactly 1.
    """
    mean = law.mean_offspring()
    if mean <= 1.0 + 1e-10:
        return BranchingStats(mean, 1.0, 0.0, 0, 0.0)
    q = 0.0
    iters = 0
    for iters in range(1, 100_000 + 1):
        nq = law.pgf(q)
        delta = abs(nq - q)
        q = nq
        if delta < 1e-12 and iters >= 200:
            break
    return BranchingStats(mean, q, 1.0 - q, iters, abs(law.pgf(q) - q))


def percolation_dimension(law: OffspringLaw, ifs: IFS) -> float:
    """Solve E(sum_i X_i r_i^s) = 1 for s.

    Only marginal retention probabilities enter by linearity.  Subcritical
    laws get an explicit error rather than a spurious root.
    """
    if law.m != ifs.m:
        raise ParameterError("law arity does not match the IFS")
    if law.mean_offspring() <= 1.0 + 1e-10:
        raise SubcriticalLawError(
            f"mean offspring {law.mean_offspring():.6g} <= 1; surviving set is a.s. empty"
        )
    p = law.marginals()
    r = ifs.ratios

    def f(s):
        return float(np.sum(p * r ** s)) - 1.0

    hi = float(ifs.ambient_dim + 1)
    while f(hi) > 0.0:
        hi *= 2.0
    return float(brentq(f, 0.0, hi, xtol=1e-14, rtol=8.9e-16, maxiter=200))


# ---------------------------------------------------------------------------
# Mandelbrot percolation


@dataclass(eq=False)
class MandelbrotConfig:
    ifs: IFS
    law: OffspringLaw
    M: int
    d: int
    p: float
    supercritical: bool
    dimension: float | None
    projection_positive_thresholds: dict


def mandelbrot_config(M: int, d: int, p: float) -> MandelbrotConfig:
    """M-adic grid percolation on the unit cube in R^d.

    The IFS is the M^d homotheties of ratio 1/M onto grid cells; the law is
    bernoulli-uniform(p).  Supercritical iff p > M^-d; the surviving-set
    dimension is then d + log p / log M.  Projections to k-dimensional
    subspaces have positive volume iff p > M^-(d-k).
    """
    if M < 2 or d < 1:
        raise ParameterError("need M >= 2 and d >= 1")
    if not 0.0 <= p <= 1.0:
        raise ParameterError("p must lie in [0, 1]")
    ratio = 1.0 / M
    grid = np.stack(
        np.meshgrid(*[np.arange(M) for _ in range(d)], indexing="ij"), axis=-1
    ).reshape(-1, d)
    maps = tuple(
        Similarity(ratio=ratio, angle=0.0, translation=g / M) for g in grid
    )
    ifs = IFS.from_maps(
        maps, separation="OSC-assumed", label=f"mandelbrot_M{M}_d{d}"
    )
    law = uniform_law(M ** d, p)
    supercritical = p > M ** (-d)
    dim = d + math.log(p) / math.log(M) if supercritical and p > 0 else None
    thresholds = {k: M ** (-(d - k)) for k in range(1, d)}
    return MandelbrotConfig(
        ifs=ifs,
        law=law,
        M=M,
        d=d,
        p=p,
        supercritical=supercritical,
        dimension=dim,
        projection_positive_thresholds=thresholds,
    )


# ---------------------------------------------------------------------------
# batch enumeration across many seeds (small depths)


def _batch_alive(law: OffspringLaw, seeds: np.ndarray, depth: int, budget: int):
    """Yield (k, alive) for k = 0..depth where alive is (n_seeds, m^k) bool.

    Enumerates the full m^k tree, so only suitable for small depths; keyed
    identically to sample_tree (checked by tests).
    """
    m = law.m
    n_nodes = sum(m ** k for k in range(depth + 1))
    if n_nodes * len(seeds) > budget:
        raise BudgetExceededError(n_nodes * len(seeds), budget, what="node draws")
    h = rng.root_hash(seeds.astype(np.uint64)).reshape(-1, 1)
    alive = np.ones((len(seeds), 1), dtype=bool)
    yield 0, alive
    for k in range(depth):
        n = h.shape[1]
        child_h = rng.child_hashes(h.ravel(), m).reshape(len(seeds), n * m)
        if law.independent:
            u = rng.uniform_from_hash(child_h, rng.SALT_RETAIN)
            keep = u < np.tile(law.retain, n)[None, :]
        else:
            u = rng.uniform_from_hash(h.ravel(), rng.SALT_MASK)
            idx = np.searchsorted(law._cum_mask_probs(), u, side="right")
            idx = np.minimum(idx, len(law.mask_probs) - 1)
            keep = law.masks[idx].astype(bool).reshape(len(seeds), n * m)
        alive = np.repeat(alive, m, axis=1) & keep
        h = child_h
        yield k + 1, alive


def batch_generation_counts(
    law: OffspringLaw, depth: int, seeds, budget: int = DEFAULT_BUDGET
) -> np.ndarray:
    """Surviving-word counts per depth for many seeds at once."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    out = np.zeros((len(seeds), depth + 1), dtype=np.int64)
    for k, alive in _batch_alive(law, seeds, depth, budget):
        out[:, k] = alive.sum(axis=1)
    return out


def batch_intersection_counts(
    law1: OffspringLaw,
    seeds1,
    law2: OffspringLaw,
    seeds2,
    depth: int,
    budget: int = DEFAULT_BUDGET,
) -> np.ndarray:
    """Per-depth counts of the intersection of two independent samples."""
    if law1.m != law2.m:
        raise ParameterError("laws must share the alphabet")
    seeds1 = np.asarray(seeds1, dtype=np.uint64)
    seeds2 = np.asarray(seeds2, dtype=np.uint64)
    if len(seeds1) != len(seeds2):
        raise ParameterError("seed arrays must be paired")
    out = np.zeros((len(seeds1), depth + 1), dtype=np.int64)
    it1 = _batch_alive(law1, seeds1, depth, budget)
    it2 = _batch_alive(law2, seeds2, depth, budget)
    for (k, a1), (_, a2) in zip(it1, it2):
        out[:, k] = (a1 & a2).sum(axis=1)
    return out


def path_survival(law: OffspringLaw, word, seeds) -> np.ndarray:
    """For a fixed word, whether its whole path is retained, per seed."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    h = rng.root_hash(seeds)
    alive = np.ones(len(seeds), dtype=bool)
    for s in word:
        if not 1 <= int(s) <= law.m:
            raise ParameterError(f"symbol {s} outside 1..{law.m}")
        child = rng.extend_hash(h, np.full(len(seeds), int(s), dtype=np.uint64))
        if law.independent:
            u = rng.uniform_from_hash(child, rng.SALT_RETAIN)
            alive &= u < law.retain[int(s) - 1]
        else:
            u = rng.uniform_from_hash(h, rng.SALT_MASK)
            idx = np.searchsorted(law._cum_mask_probs(), u, side="right")
            idx = np.minimum(idx, len(law.mask_probs) - 1)
            alive &= law.masks[idx, int(s) - 1].astype(bool)
        h = child
    return alive

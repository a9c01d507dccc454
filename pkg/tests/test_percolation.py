import math

import numpy as np
import pytest

import dimlab as dl
from dimlab import rng
from dimlab.errors import ParameterError, SubcriticalLawError

import oracles


def quartic_extinction(m: int, p: float) -> float:
    """Smallest root of E z^X = z in [0, 1) for X ~ Binomial(m, p)."""
    coeffs = [math.comb(m, j) * (1 - p) ** (m - j) * p ** j for j in range(m + 1)]
    poly = np.zeros(m + 1)
    for j, c in enumerate(coeffs):
        poly[m - j] = c
    poly[m - 1] -= 1.0  # subtract z
    roots = np.roots(poly)
    real = sorted(
        float(z.real) for z in roots if abs(z.imag) < 1e-12 and -1e-12 <= z.real < 1.0
    )
    return real[0]


# ---------------------------------------------------------------------------
# offspring laws


def test_standard_law_retention(carpet):
    law = dl.standard_law(carpet, 0.4)
    assert np.array_equal(law.retain, carpet.ratios ** 0.4)
    assert law.independent


def test_uniform_law_requires_probability():
    law = dl.uniform_law(4, 0.3)
    assert np.all(law.retain == 0.3)
    with pytest.raises(ParameterError):
        dl.uniform_law(4, 1.2)
    with pytest.raises(ParameterError):
        dl.uniform_law(0, 0.5)


def test_pgf_binomial_closed_form():
    law = dl.uniform_law(4, 0.3)
    for z in (0.0, 0.25, 0.7, 1.0):
        assert law.pgf(z) == pytest.approx((0.7 + 0.3 * z) ** 4, abs=1e-14)
    assert law.mean_offspring() == pytest.approx(1.2, abs=1e-14)


def test_table_law_masks():
    masks = np.array([[1, 1, 0, 0], [0, 0, 1, 1], [1, 1, 1, 1]], dtype=bool)
    law = dl.table_law(masks, [0.25, 0.25, 0.5])
    assert not law.independent
    assert law.mean_offspring() == pytest.approx(0.25 * 2 + 0.25 * 2 + 0.5 * 4)
    assert np.allclose(law.marginals(), [0.75, 0.75, 0.75, 0.75])
    with pytest.raises(ParameterError):
        dl.table_law(masks, [0.5, 0.5, 0.5])


def test_deterministic_law_keeps_everything():
    law = dl.deterministic_law(3)
    sample = dl.sample_tree(law, 4, seed=1)
    assert np.array_equal(sample.counts(), [1, 3, 9, 27, 81])


# ---------------------------------------------------------------------------
# extinction and survival


def test_extinction_fixed_point_matches_polynomial_root():
    law = dl.uniform_law(4, 0.3)
    stats = dl.survival_probability(law)
    want = quartic_extinction(4, 0.3)
    assert stats.extinction_prob == pytest.approx(want, abs=1e-10)
    assert stats.survival_prob == pytest.approx(1.0 - want, abs=1e-10)
    assert stats.residual < 1e-12


def test_subcritical_law_dies_out():
    stats = dl.survival_probability(dl.uniform_law(4, 0.2))
    assert stats.extinction_prob == 1.0 and stats.survival_prob == 0.0
    stats = dl.survival_probability(dl.deterministic_law(3))
    assert stats.extinction_prob == 0.0


def test_extinction_against_monte_carlo():
    law = dl.uniform_law(4, 0.3)
    stats = dl.survival_probability(law)
    mc = oracles.gw_extinction_by_depth(4, 0.3, depth=30, trials=20_000, seed=7)
    # depth-30 extinction is within MC noise of eventual extinction
    assert abs(mc - stats.extinction_prob) < 0.02


# ---------------------------------------------------------------------------
# tree sampling


def test_sample_tree_is_deterministic(carpet):
    law = dl.standard_law(carpet, 0.3)
    a = dl.sample_tree(law, 5, seed=42)
    b = dl.sample_tree(law, 5, seed=42)
    assert np.array_equal(a.counts(), b.counts())
    for k in range(6):
        assert np.array_equal(a.symbols_at(k), b.symbols_at(k))


def test_sample_tree_downward_closed(carpet):
    law = dl.standard_law(carpet, 0.5)
    sample = dl.sample_tree(law, 4, seed=3)
    for k in range(1, 5):
        parents = set(sample.words_at(k - 1))
        for w in sample.words_at(k):
            assert w[:-1] in parents


def test_batch_counts_match_tree_counts(carpet):
    law = dl.standard_law(carpet, 0.5)
    seeds = rng.derive_seed(np.uint64(11), np.arange(20, dtype=np.uint64))
    batch = dl.batch_generation_counts(law, 4, seeds)
    for i, s in enumerate(seeds):
        assert np.array_equal(batch[i], dl.sample_tree(law, 4, int(s)).counts())


def test_batch_counts_match_tree_for_mask_law():
    masks = np.array([[1, 1, 0, 0], [0, 0, 1, 1], [1, 1, 1, 1]], dtype=bool)
    law = dl.table_law(masks, [0.25, 0.25, 0.5])
    seeds = np.arange(10, dtype=np.uint64)
    batch = dl.batch_generation_counts(law, 5, seeds)
    for i, s in enumerate(seeds):
        assert np.array_equal(batch[i], dl.sample_tree(law, 5, int(s)).counts())


def test_path_survival_agrees_with_sampled_trees(carpet):
    law = dl.standard_law(carpet, 0.6)
    word = (3, 5, 2)
    seeds = np.arange(200, dtype=np.uint64)
    alive = dl.path_survival(law, word, seeds)
    for s in (0, 17, 63, 128):
        tree_words = set(dl.sample_tree(law, 3, s).words_at(3))
        assert bool(alive[s]) == (word in tree_words)


def test_word_survival_frequency_matches_power_law(carpet):
    """Standard(alpha) word survival is (r^n)^alpha; check MC frequency."""
    alpha = 0.4
    law = dl.standard_law(carpet, alpha)
    seeds = np.arange(100_000, dtype=np.uint64)
    for word in [(1, 5), (2, 7, 1, 4), (8, 3, 6, 1, 2, 5)]:
        n = len(word)
        want = float((carpet.ratios[0] ** n) ** alpha)
        freq = float(dl.path_survival(law, word, seeds).mean())
        se = math.sqrt(want * (1.0 - want) / len(seeds))
        assert abs(freq - want) <= 3.0 * se, (word, freq, want)


def test_surviving_tree_retries_until_alive(carpet):
    law = dl.standard_law(carpet, 0.8)
    sample, tries = dl.sample_surviving_tree(law, 6, seed=5)
    assert not sample.extinct
    assert tries >= 1
    assert sample.counts()[6] > 0


def test_depth_zero_tree_is_just_the_root(carpet):
    law = dl.standard_law(carpet, 0.5)
    sample = dl.sample_tree(law, 0, seed=9)
    assert np.array_equal(sample.counts(), [1])
    assert not sample.extinct


# ---------------------------------------------------------------------------
# persistence and cell clouds


def test_persistent_counts_are_ancestor_counts(carpet):
    law = dl.standard_law(carpet, 0.6)
    sample = dl.sample_tree(law, 5, seed=21)
    deepest = sample.words_at(5)
    counts = sample.counts()
    pcounts = sample.persistent_counts()
    for k in range(6):
        ancestors = {w[:k] for w in deepest}
        assert pcounts[k] == len(ancestors)
        assert pcounts[k] <= counts[k]
    assert pcounts[5] == counts[5]


def test_cell_cloud_sizes_and_radii(carpet):
    law = dl.standard_law(carpet, 0.6)
    sample = dl.sample_tree(law, 5, seed=21)
    centers, radii = sample.cell_cloud(carpet, 3)
    assert len(centers) == sample.counts()[3]
    assert np.allclose(radii, carpet.ball_radius * carpet.ratios[0] ** 3)
    pcenters, _ = sample.cell_cloud(carpet, 3, persistent=True)
    assert len(pcenters) == sample.persistent_counts()[3]


# ---------------------------------------------------------------------------
# intersections


def test_intersection_is_setwise(carpet):
    law = dl.standard_law(carpet, 0.4)
    a = dl.sample_tree(law, 4, seed=1)
    b = dl.sample_tree(law, 4, seed=2)
    both = dl.intersect_samples(a, b)
    for k in range(5):
        want = set(a.words_at(k)) & set(b.words_at(k))
        assert set(both.words_at(k)) == want
    flipped = dl.intersect_samples(b, a)
    assert np.array_equal(both.counts(), flipped.counts())


def test_batch_intersections_match_pairwise(carpet):
    law1 = dl.standard_law(carpet, 0.3)
    law2 = dl.standard_law(carpet, 0.5)
    seeds1 = np.arange(8, dtype=np.uint64)
    seeds2 = np.arange(100, 108, dtype=np.uint64)
    batch = dl.batch_intersection_counts(law1, seeds1, law2, seeds2, 3)
    for i in range(8):
        a = dl.sample_tree(law1, 3, int(seeds1[i]))
        b = dl.sample_tree(law2, 3, int(seeds2[i]))
        assert np.array_equal(batch[i], dl.intersect_samples(a, b).counts())


# ---------------------------------------------------------------------------
# dimension formulas


def test_standard_law_dimension_shifts_moran(carpet, rot3):
    for ifs, alpha in ((carpet, 0.4), (rot3, 0.3)):
        law = dl.standard_law(ifs, alpha)
        want = dl.moran_dimension(ifs) - alpha
        assert dl.percolation_dimension(law, ifs) == pytest.approx(want, abs=1e-9)


def test_standard_law_dimension_mixed_ratios():
    maps = tuple(
        dl.Similarity(ratio=r, angle=0.0, translation=np.array([t, 0.0]))
        for r, t in ((0.5, 0.0), (0.3, 0.5), (0.2, 0.8))
    )
    ifs = dl.IFS.from_maps(maps)
    alpha = 0.25
    law = dl.standard_law(ifs, alpha)
    want = dl.moran_dimension(ifs) - alpha
    assert dl.percolation_dimension(law, ifs) == pytest.approx(want, abs=1e-9)


def test_mandelbrot_dimension_closed_form():
    cfg = dl.mandelbrot_config(3, 2, 0.7)
    want = 2.0 + math.log(0.7) / math.log(3.0)
    assert cfg.supercritical
    assert cfg.dimension == pytest.approx(want, abs=1e-13)
    assert dl.percolation_dimension(cfg.law, cfg.ifs) == pytest.approx(want, abs=1e-12)


def test_mandelbrot_criticality_boundary():
    sub = dl.mandelbrot_config(3, 2, 1.0 / 9.0)
    assert not sub.supercritical and sub.dimension is None
    assert dl.mandelbrot_config(2, 2, 0.26).supercritical
    cfg = dl.mandelbrot_config(3, 2, 0.5)
    assert cfg.projection_positive_thresholds == {1: pytest.approx(1.0 / 3.0)}


def test_subcritical_dimension_raises(carpet):
    law = dl.uniform_law(carpet.m, 0.1)
    with pytest.raises(SubcriticalLawError):
        dl.percolation_dimension(law, carpet)

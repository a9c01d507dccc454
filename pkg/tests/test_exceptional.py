import math

import numpy as np
import pytest

import dimlab as dl
from dimlab import AlignmentParams
from dimlab.errors import ParameterError

import oracles


CATALOG = dict(r=0.5, theta=1.0, b=1.0, gamma=0.0, q=2, k=2, delta=1.0 / 3.0)


def test_params_validation():
    with pytest.raises(ParameterError):
        AlignmentParams(**{**CATALOG, "r": 1.0}, big_n=10)
    with pytest.raises(ParameterError):
        AlignmentParams(**{**CATALOG, "delta": 0.0}, big_n=10)
    with pytest.raises(ParameterError):
        AlignmentParams(**CATALOG, big_n=0)
    with pytest.raises(ParameterError):
        AlignmentParams(**{**CATALOG, "b": -1.0}, big_n=10)


def test_threshold_and_tau_grid():
    p = AlignmentParams(**CATALOG, big_n=10, tau_grid=16)
    assert p.threshold == 0.5 ** 8 / 15.0
    taus = p.taus()
    assert len(taus) == 16
    assert taus[0] == 1.0
    assert taus[-1] == pytest.approx(16.0)
    assert np.all(np.diff(np.log(taus)) > 0.0)


def test_fractions_match_naive_loop():
    p = AlignmentParams(**CATALOG, big_n=25, tau_grid=64)
    for beta in (0.0, 0.4, 1.9, 3.0):
        got = dl.membership_fraction(p, beta)
        want = oracles.alignment_fractions_naive(
            p.r, p.theta, p.b, p.gamma, p.q, p.k, p.big_n, p.taus(), beta
        )
        assert np.max(np.abs(got.fractions - np.asarray(want))) <= 1e-12
        assert got.max_fraction == pytest.approx(max(want), abs=1e-12)


def test_zero_displacement_aligns_everywhere():
    """b = 0 makes every term exactly 0, integer-aligned at any scale."""
    p = AlignmentParams(
        r=0.5, theta=1.0, b=0.0, gamma=0.0, q=2, k=2, delta=1.0 / 3.0,
        big_n=30, tau_grid=32,
    )
    res = dl.membership_fraction(p, 0.9)
    assert res.max_fraction == 1.0
    assert res.member


def test_integer_power_terms_align_until_representability():
    """theta = 0 with cos = -1 turns the terms into exact signed powers of
    two: every term with exponent in [2, 53) is an integer, the closing term
    -1/4 never aligns, and anything at 2^53 or beyond is discarded."""
    p = AlignmentParams(
        r=0.5, theta=0.0, b=1.0, gamma=math.pi, q=2, k=2, delta=1.0 / 3.0,
        big_n=30, tau_grid=32,
    )
    res = dl.membership_fraction(p, 0.0)  # cos(pi) == -1.0 exactly
    aligned_n = [n for n in range(1, 31) if 2 <= 4 * (30 - n) - 2 < 53]
    assert res.max_fraction == pytest.approx(len(aligned_n) / 30.0, abs=1e-12)
    assert res.witness_tau == 1.0


def test_catalog_direction_is_not_exceptional():
    p = AlignmentParams(**CATALOG, big_n=100, tau_grid=512)
    res = dl.membership_fraction(p, 0.7)
    assert res.max_fraction < 0.2
    assert not res.member


def test_huge_terms_do_not_count_as_aligned():
    # with b enormous, early terms overflow past 2^53 and must be ignored
    p = AlignmentParams(
        r=0.5, theta=1.0, b=1e300, gamma=0.0, q=2, k=2, delta=0.99,
        big_n=40, tau_grid=8,
    )
    res = dl.membership_fraction(p, 0.3)
    assert res.max_fraction < 1.0


def test_scan_matches_pointwise_membership():
    p = AlignmentParams(**CATALOG, big_n=40, tau_grid=128)
    betas = np.linspace(0.0, math.pi, 64, endpoint=False)
    scan = dl.scan_directions(p, betas)
    assert scan.members.dtype == bool
    for i in (0, 17, 40, 63):
        one = dl.membership_fraction(p, float(betas[i]))
        assert scan.max_fractions[i] == pytest.approx(one.max_fraction, abs=1e-12)
    assert scan.member_fraction == scan.members.mean()


def test_witness_tau_is_argmax():
    p = AlignmentParams(**CATALOG, big_n=40, tau_grid=128)
    res = dl.membership_fraction(p, 1.2)
    taus = p.taus()
    best = int(np.argmax(res.fractions))
    assert res.witness_tau == taus[best]


def test_delta_rethresholding_is_monotone():
    p = AlignmentParams(**CATALOG, big_n=60, tau_grid=256)
    betas = np.linspace(0.0, math.pi, 128, endpoint=False)
    scan = dl.scan_directions(p, betas)
    small = scan.members_at(0.1)
    large = scan.members_at(0.5)
    assert not np.any(small & ~large)  # members at 0.1 stay members at 0.5
    assert np.array_equal(scan.members_at(p.delta), scan.members)


def test_scan_rejects_empty_grid():
    p = AlignmentParams(**CATALOG, big_n=10)
    with pytest.raises(ParameterError):
        dl.scan_directions(p, np.zeros(0))

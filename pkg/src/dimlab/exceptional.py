"""Membership test for directions with persistently aligned phases.

A direction beta is flagged when some single scale tau makes nearly every
term b tau r^{q - qk(N-n)} cos(beta + gamma - nqk theta) land within
r^{2qk}/15 of an integer.  The test scans a geometric tau grid over one
multiplicative period and takes the best alignment fraction.

Distance to the nearest integer is only meaningful while the value itself
is exactly representable; beyond 2^53 every float is an integer and the
distance degenerates to 0.  Terms that large are therefore counted as not
aligned rather than trivially aligned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = [
    "AlignmentParams",
    "MembershipResult",
    "membership_fraction",
    "ScanResult",
    "scan_directions",
]

_REPRESENTABLE = float(2 ** 53)


@dataclass(frozen=True)
class AlignmentParams:
    """Geometry of the phase sequence.

    r, theta: contraction ratio and rotation angle of the base system;
    b, gamma: modulus and argument of the displacement being tested;
    q, k:     block size and sparsification stride;
    delta:    tolerated fraction of misaligned terms;
    big_n:    number of terms in the sequence;
    tau_grid: size of the geometric scale grid on [1, r^-qk].
    """

    r: float
    theta: float
    b: float
    gamma: float
    q: int
    k: int
    delta: float
    big_n: int
    tau_grid: int = 4096

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise ParameterError("r must lie in (0, 1)")
        if self.b < 0.0:
            raise ParameterError("b must be >= 0")
        if self.q < 1 or self.k < 1:
            raise ParameterError("q and k must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ParameterError("delta must lie in (0, 1)")
        if self.big_n < 1:
            raise ParameterError("big_n must be >= 1")
        if self.tau_grid < 1:
            raise ParameterError("tau_grid must be >= 1")

    @property
    def threshold(self) -> float:
        return self.r ** (2 * self.q * self.k) / 15.0

    def taus(self) -> np.ndarray:
        hi = self.r ** (-self.q * self.k)
        return np.geomspace(1.0, hi, self.tau_grid)


@dataclass(eq=False)
class MembershipResult:
    beta: float
    max_fraction: float
    witness_tau: float
    member: bool
    fractions: np.ndarray  # per tau grid point


def _term_matrix(params: AlignmentParams, beta: float) -> np.ndarray:
    """Values b tau r^{q-qk(N-n)} cos(beta+gamma-nqk theta), shape (taus, N)."""
    n = np.arange(1, params.big_n + 1, dtype=np.float64)
    qk = params.q * params.k
    exponents = params.q - qk * (params.big_n - n)
    cosines = np.cos(beta + params.gamma - n * qk * params.theta)
    with np.errstate(over="ignore"):
        scales = params.r ** exponents
        return params.b * params.taus()[:, None] * (scales * cosines)[None, :]


def _aligned(values: np.ndarray, threshold: float) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        dist = np.abs(values - np.round(values))
        return (np.abs(values) < _REPRESENTABLE) & (dist <= threshold)


def membership_fraction(params: AlignmentParams, beta: float) -> MembershipResult:
    """Best alignment fraction over the tau grid for one direction."""
    values = _term_matrix(params, beta)
    fractions = _aligned(values, params.threshold).mean(axis=1)
    best = int(np.argmax(fractions))
    max_fraction = float(fractions[best])
    return MembershipResult(
        beta=float(beta),
        max_fraction=max_fraction,
        witness_tau=float(params.taus()[best]),
        member=max_fraction > 1.0 - params.delta,
        fractions=fractions,
    )


@dataclass(eq=False)
class ScanResult:
    params: AlignmentParams
    betas: np.ndarray
    max_fractions: np.ndarray
    witness_taus: np.ndarray
    members: np.ndarray

    @property
    def member_fraction(self) -> float:
        return float(self.members.mean())

    def members_at(self, delta: float) -> np.ndarray:
        """Re-threshold the stored fractions; monotone in delta by construction."""
        return self.max_fractions > 1.0 - delta


def scan_directions(params: AlignmentParams, betas) -> ScanResult:
    betas = np.asarray(betas, dtype=np.float64)
    if betas.ndim != 1 or len(betas) == 0:
        raise ParameterError("betas must be a non-empty 1-d array")
    taus = params.taus()
    n = np.arange(1, params.big_n + 1, dtype=np.float64)
    qk = params.q * params.k
    exponents = params.q - qk * (params.big_n - n)
    with np.errstate(over="ignore"):
        scales = params.r ** exponents
    phase = params.gamma - n * qk * params.theta
    threshold = params.threshold
    max_fractions = np.zeros(len(betas))
    witness_taus = np.zeros(len(betas))
    for i, beta in enumerate(betas):
        with np.errstate(over="ignore"):
            vals = params.b * taus[:, None] * (scales * np.cos(beta + phase))[None, :]
        fractions = _aligned(vals, threshold).mean(axis=1)
        best = int(np.argmax(fractions))
        max_fractions[i] = fractions[best]
        witness_taus[i] = taus[best]
    members = max_fractions > 1.0 - params.delta
    return ScanResult(
        params=params,
        betas=betas,
        max_fractions=max_fractions,
        witness_taus=witness_taus,
        members=members,
    )

"""Counter-based randomness keyed by (seed, word path).

Every random decision in the tree samplers is a pure function of the global
seed and a stable 64-bit hash of the word path, so results do not depend on
traversal order, chunking, or thread count.  The mixer is the standard
splitmix64 finalizer, applied over uint64 numpy arrays so millions of nodes
can be keyed in one vectorized pass (numpy's counter-based bit generators
cannot batch across distinct keys, which is the access pattern here).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "mix64",
    "uniform_from_hash",
    "root_hash",
    "child_hashes",
    "derive_seed",
    "level_uniforms",
]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# Fixed stream salts.  Distinct salts keep the retention draw, the mask draw,
# and the path-chaining hash independent of each other.
SALT_TREE = np.uint64(0x1B873593C9E3779B)
SALT_RETAIN = np.uint64(0x85EBCA6B9E3779B9)
SALT_MASK = np.uint64(0xC2B2AE3D27D4EB4F)
SALT_LEVEL = np.uint64(0x27D4EB2F165667C5)
SALT_SUBSEED = np.uint64(0x165667B19E3779F9)

_TO_UNIT = 2.0 ** -53


def mix64(x) -> np.ndarray:
    """splitmix64 finalizer, vectorized over uint64 input."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def uniform_from_hash(h, salt) -> np.ndarray:
    """Map hashes to floats in [0, 1), on an independent stream per salt."""
    with np.errstate(over="ignore"):
        z = mix64(np.asarray(h, dtype=np.uint64) ^ salt)
    return (z >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def root_hash(seed) -> np.ndarray:
    """Hash of the empty word for a given seed (or array of seeds)."""
    with np.errstate(over="ignore"):
        return mix64(mix64(np.asarray(seed, dtype=np.uint64)) ^ SALT_TREE)


def child_hashes(parent: np.ndarray, m: int) -> np.ndarray:
    """Hashes of the m children of each parent word; shape (n, m).

    Symbols are 1..m.  The chain h(w . i) = mix(h(w) ^ mix(i)) makes the
    hash a function of the path alone.
    """
    syms = mix64(np.arange(1, m + 1, dtype=np.uint64))
    with np.errstate(over="ignore"):
        return mix64(np.asarray(parent, dtype=np.uint64)[:, None] ^ syms[None, :])


def extend_hash(parent: np.ndarray, symbols: np.ndarray) -> np.ndarray:
    """Hash of each parent word extended by its own symbol (elementwise)."""
    with np.errstate(over="ignore"):
        return mix64(
            np.asarray(parent, dtype=np.uint64)
            ^ mix64(np.asarray(symbols, dtype=np.uint64))
        )


def derive_seed(seed, index) -> np.ndarray:
    """Child seed for trial `index` under a master seed (vectorizable)."""
    with np.errstate(over="ignore"):
        return mix64(
            mix64(np.asarray(seed, dtype=np.uint64) ^ SALT_SUBSEED)
            ^ mix64(np.asarray(index, dtype=np.uint64))
        )


def level_uniforms(seed, level: int, count: int) -> np.ndarray:
    """Uniforms u(seed, level, 0..count-1) for per-level vector draws."""
    if count >= 1 << 32:
        raise ValueError("per-level draw count must fit in 32 bits")
    base = np.uint64(int(level) << 32)
    with np.errstate(over="ignore"):
        counters = base + np.arange(count, dtype=np.uint64)
        keyed = mix64(np.asarray(seed, dtype=np.uint64) ^ SALT_LEVEL) ^ counters
    return uniform_from_hash(keyed, SALT_LEVEL)

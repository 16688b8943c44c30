"""Pure-Python reference kernels.

These are the bit-exact reference for the compiled extension: every function
here must produce identical outputs to its counterpart in ``_fast.pyx``.
The golden files under ``tests/golden/`` pin the reference sequences.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

MASK64 = (1 << 64) - 1

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

# Weyl increment and mixing constants of the splitmix64 generator.
SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def splitmix64(seed: int, counter: int) -> int:
    """k-th output of the splitmix64 counter generator for a given seed.

    Counter-based: output k is a pure function of (seed, k), so draws can be
    computed independently and out of order.
    """
    z = (seed + ((counter + 1) * SPLITMIX_GAMMA)) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def uniform01(seed: int, counter: int) -> float:
    """Deterministic uniform draw in [0, 1) from (seed, counter).

    Uses the top 53 bits of splitmix64 so the value is exactly representable.
    """
    return (splitmix64(seed, counter) >> 11) * 2.0**-53


def hash_terms(
    keys: Sequence[bytes], values: Sequence[float], n_buckets: int
) -> tuple[np.ndarray, np.ndarray]:
    """Hash feature keys into buckets and apply the hash-derived sign.

    Returns (bucket indices, signed values). ``n_buckets`` must be a power of
    two. The sign is taken from bit 63 of the key hash (set bit means -1).
    """
    n = len(keys)
    idx = np.empty(n, dtype=np.int64)
    out = np.empty(n, dtype=np.float64)
    mask = n_buckets - 1
    for i in range(n):
        h = fnv1a64(keys[i])
        idx[i] = h & mask
        out[i] = -values[i] if (h >> 63) & 1 else values[i]
    return idx, out

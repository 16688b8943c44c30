# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: bit-exact twins of ``_pure``.

Hot paths are the per-request feature hashing and the seeded sampling draw;
everything numeric stays in uint64 arithmetic so results match the
pure-Python reference exactly.
"""
from libc.stdint cimport int64_t, uint8_t, uint64_t

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef uint64_t FNV_OFFSET_C = 0xCBF29CE484222325UL
cdef uint64_t FNV_PRIME_C = 0x100000001B3UL
cdef uint64_t GAMMA_C = 0x9E3779B97F4A7C15UL
cdef uint64_t MIX1_C = 0xBF58476D1CE4E5B9UL
cdef uint64_t MIX2_C = 0x94D049BB133111EBUL

FNV_OFFSET = FNV_OFFSET_C
FNV_PRIME = FNV_PRIME_C
SPLITMIX_GAMMA = GAMMA_C
MASK64 = (1 << 64) - 1


cdef inline uint64_t _fnv1a64(const uint8_t* data, Py_ssize_t n) noexcept nogil:
    cdef uint64_t h = FNV_OFFSET_C
    cdef Py_ssize_t i
    for i in range(n):
        h ^= <uint64_t>data[i]
        h *= FNV_PRIME_C
    return h


cdef inline uint64_t _splitmix64(uint64_t seed, uint64_t counter) noexcept nogil:
    cdef uint64_t z = seed + (counter + 1) * GAMMA_C
    z = (z ^ (z >> 30)) * MIX1_C
    z = (z ^ (z >> 27)) * MIX2_C
    return z ^ (z >> 31)


def fnv1a64(bytes data) -> int:
    """64-bit FNV-1a hash of a byte string."""
    return _fnv1a64(<const uint8_t*><const char*>data, len(data))


def splitmix64(seed, counter) -> int:
    """k-th output of the splitmix64 counter generator for a given seed."""
    return _splitmix64(<uint64_t>seed, <uint64_t>counter)


def uniform01(seed, counter) -> float:
    """Deterministic uniform draw in [0, 1) from (seed, counter)."""
    return <double>(_splitmix64(<uint64_t>seed, <uint64_t>counter) >> 11) * (2.0 ** -53)


def hash_terms(list keys, values, n_buckets):
    """Hash feature keys into buckets and apply the hash-derived sign."""
    cdef Py_ssize_t n = len(keys)
    cdef cnp.ndarray[int64_t, ndim=1] idx = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vals = np.ascontiguousarray(values, dtype=np.float64)
    cdef uint64_t mask = <uint64_t>n_buckets - 1
    cdef uint64_t h
    cdef Py_ssize_t i
    cdef bytes key
    for i in range(n):
        key = keys[i]
        h = _fnv1a64(<const uint8_t*><const char*>key, len(key))
        idx[i] = <int64_t>(h & mask)
        out[i] = -vals[i] if (h >> 63) & 1 else vals[i]
    return idx, out

"""Kernel backend selection.

The compiled extension is preferred when importable; the pure-Python
reference is the fallback. ``BANDITD_PURE_PYTHON=1`` forces the fallback,
which the equivalence tests and the benchmark use to compare backends.
"""
import os

from . import _pure

if os.environ.get("BANDITD_PURE_PYTHON"):
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"

fnv1a64 = _impl.fnv1a64
splitmix64 = _impl.splitmix64
uniform01 = _impl.uniform01
hash_terms = _impl.hash_terms

FNV_OFFSET = _pure.FNV_OFFSET
FNV_PRIME = _pure.FNV_PRIME
SPLITMIX_GAMMA = _pure.SPLITMIX_GAMMA
MASK64 = _pure.MASK64

__all__ = [
    "BACKEND",
    "FNV_OFFSET",
    "FNV_PRIME",
    "MASK64",
    "SPLITMIX_GAMMA",
    "fnv1a64",
    "hash_terms",
    "splitmix64",
    "uniform01",
]

"""Compare the compiled kernel extension against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeat 5]

The two backends are bit-identical (the test suite proves it); this shows
what the extension buys on the serving path's hot operations.
"""
import argparse
import timeit

import numpy as np

from banditd._kernels import _pure

try:
    from banditd._kernels import _fast
except ImportError:
    _fast = None


def bench(label, fn, number, repeat):
    best = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
    print(f"  {label:<22} {best * 1e6:9.2f} us/op")
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    keys = [bytes(rng.integers(0, 256, 24).astype(np.uint8)) for _ in range(64)]
    values = rng.normal(size=64)
    blob = bytes(rng.integers(0, 256, 4096).astype(np.uint8))

    backends = [("pure-python", _pure)]
    if _fast is not None:
        backends.append(("compiled", _fast))
    else:
        print("compiled extension not built; showing pure-python only")

    results = {}
    for name, impl in backends:
        print(f"{name}:")
        results[name] = {
            "fnv1a64 (4 KiB)": bench(
                "fnv1a64 (4 KiB)", lambda: impl.fnv1a64(blob), 200, args.repeat),
            "splitmix64": bench(
                "splitmix64", lambda: impl.splitmix64(12345, 678), 100_000,
                args.repeat),
            "uniform01": bench(
                "uniform01", lambda: impl.uniform01(12345, 678), 100_000,
                args.repeat),
            "hash_terms (64 keys)": bench(
                "hash_terms (64 keys)",
                lambda: impl.hash_terms(keys, values, 1 << 18), 2_000,
                args.repeat),
        }

    if len(results) == 2:
        print("speedup (compiled over pure):")
        for op in results["pure-python"]:
            ratio = results["pure-python"][op] / results["compiled"][op]
            print(f"  {op:<22} {ratio:8.1f}x")


if __name__ == "__main__":
    main()

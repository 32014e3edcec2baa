"""Compiled vs numpy kernels.

    python benchmarks/bench_kernels.py [--repeat 20]

Prints one CSV line per (kernel, size, arity) with the median time of each
backend and the speed-up of the compiled one.
"""

from __future__ import annotations

import argparse
import statistics
import timeit

import numpy as np

from hqs import _pykernels

try:
    from hqs import _ckernels
except ImportError:  # pragma: no cover - depends on build
    _ckernels = None


def _median(fn, args: tuple, repeat: int, copy_first: bool = False) -> float:
    def call():
        fn(args[0].copy(), *args[1:]) if copy_first else fn(*args)

    call()  # warm-up
    return statistics.median(timeit.repeat(call, number=1, repeat=repeat))


def bench_apply_local(repeat: int, rng: np.random.Generator):
    for nbits in (6, 10, 14, 18):
        arr = rng.normal(size=1 << nbits) + 1j * rng.normal(size=1 << nbits)
        for k in (1, 2, 4):
            if k > nbits:
                continue
            mat = rng.normal(size=(1 << k, 1 << k)) + 1j * rng.normal(size=(1 << k, 1 << k))
            pos = np.sort(rng.choice(nbits, size=k, replace=False)).astype(np.int64)
            row = {}
            for name, mod in (("python", _pykernels), ("cython", _ckernels)):
                if mod is None:
                    continue
                row[name] = _median(mod.apply_local, (arr, nbits, mat, pos), repeat, copy_first=True)
            yield "apply_local", nbits, k, row


def bench_stabilizer(repeat: int, rng: np.random.Generator):
    for n in (16, 64, 256):
        x = rng.integers(0, 2, size=(2 * n, n), dtype=np.uint8)
        z = rng.integers(0, 2, size=(2 * n, n), dtype=np.uint8)
        r = np.zeros(2 * n, dtype=np.uint8)
        px = rng.integers(0, 2, size=n, dtype=np.uint8)
        pz = rng.integers(0, 2, size=n, dtype=np.uint8)
        row = {}
        for name, mod in (("python", _pykernels), ("cython", _ckernels)):
            if mod is None:
                continue
            row[name] = _median(mod.stabilizer_expectation, (x, z, r, px, pz), repeat)
        yield "stabilizer_expectation", n, 0, row


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    print("kernel,size,k,python_s,cython_s,speedup")
    for gen in (bench_apply_local, bench_stabilizer):
        for kernel, size, k, row in gen(args.repeat, rng):
            py, cy = row.get("python", float("nan")), row.get("cython", float("nan"))
            print(f"{kernel},{size},{k},{py:.3e},{cy:.3e},{py / cy:.2f}")


if __name__ == "__main__":
    main()

"""Pure-numpy versions of the compiled kernels (same signatures and results)."""

from __future__ import annotations

import numpy as np


def apply_local(arr: np.ndarray, nbits: int, mat: np.ndarray, bitpos: np.ndarray) -> np.ndarray:
    k = len(bitpos)
    tensor = arr.reshape((2,) * nbits)
    # bit position p lives on tensor axis nbits - 1 - p; matrix axes are most-significant first
    axes = [nbits - 1 - int(p) for p in bitpos[::-1]]
    op = mat.reshape((2,) * (2 * k))
    out = np.tensordot(op, tensor, axes=(list(range(k, 2 * k)), axes))
    out = np.moveaxis(out, list(range(k)), axes)
    return np.ascontiguousarray(out).reshape(arr.shape)


def _g(x1, z1, x2, z2):
    out = np.zeros_like(x1, dtype=np.int64)
    y = (x1 == 1) & (z1 == 1)
    xo = (x1 == 1) & (z1 == 0)
    zo = (x1 == 0) & (z1 == 1)
    out[y] = z2[y].astype(np.int64) - x2[y]
    out[xo] = z2[xo] * (2 * x2[xo].astype(np.int64) - 1)
    out[zo] = x2[zo] * (1 - 2 * z2[zo].astype(np.int64))
    return out


def stabilizer_expectation(x: np.ndarray, z: np.ndarray, r: np.ndarray,
                           px: np.ndarray, pz: np.ndarray) -> int:
    n = x.shape[1]
    anti = ((x & pz) ^ (z & px)).sum(axis=1) & 1
    if anti[n:].any():
        return 0
    sx = np.zeros(n, dtype=np.uint8)
    sz = np.zeros(n, dtype=np.uint8)
    phase = 0
    for i in np.flatnonzero(anti[:n]):
        row = n + i
        s = 2 * phase + 2 * int(r[row]) + int(_g(x[row], z[row], sx, sz).sum())
        sx ^= x[row]
        sz ^= z[row]
        phase = 1 if s % 4 == 2 else 0
    if not (np.array_equal(sx, px) and np.array_equal(sz, pz)):
        raise RuntimeError("tableau is inconsistent: product does not reproduce P")
    return -1 if phase else 1

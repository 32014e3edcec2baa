"""Kernel dispatch: compiled extension when importable, numpy fallback otherwise.

Set ``HQS_PURE_PYTHON=1`` to force the fallback (used by the benchmark and by
the parity tests).
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("HQS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _pykernels


def apply_local(arr: np.ndarray, nbits: int, mat: np.ndarray, bitpos) -> np.ndarray:
    """Apply a 2**k x 2**k matrix to k bit positions of a flat 2**nbits array.

    The result is returned; the input may or may not be modified in place, so
    callers must always use the return value.
    """
    mat = np.ascontiguousarray(mat, dtype=np.complex128)
    bitpos = np.ascontiguousarray(bitpos, dtype=np.int64)
    if mat.shape != (1 << len(bitpos),) * 2:
        raise ValueError("matrix shape does not match number of legs")
    if arr.dtype != np.complex128 or not arr.flags.c_contiguous:
        arr = np.ascontiguousarray(arr, dtype=np.complex128)
    return _impl.apply_local(arr, nbits, mat, bitpos)


def stabilizer_expectation(x, z, r, px, pz) -> int:
    """Expectation of the Pauli (px, pz) on a stabilizer tableau, in {+1, -1, 0}."""
    return int(_impl.stabilizer_expectation(
        np.ascontiguousarray(x, dtype=np.uint8), np.ascontiguousarray(z, dtype=np.uint8),
        np.ascontiguousarray(r, dtype=np.uint8), np.ascontiguousarray(px, dtype=np.uint8),
        np.ascontiguousarray(pz, dtype=np.uint8)))


def use_backend(name: str) -> None:
    """Switch backend at runtime (``"cython"`` or ``"python"``)."""
    global _impl, BACKEND
    if name == "python":
        _impl, BACKEND = _pykernels, "python"
    elif name == "cython":
        from . import _ckernels

        _impl, BACKEND = _ckernels, "cython"
    else:
        raise ValueError(f"unknown backend {name!r}")

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: dense local-operator application and stabilizer signs."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def apply_local(cnp.ndarray arr, int nbits, const double complex[:, ::1] mat,
                const long[::1] bitpos):
    """Apply ``mat`` to the legs at ``bitpos`` of a flat 2**nbits tensor, in place.

    ``mat`` is little-endian over ``bitpos``: leg ``bitpos[0]`` is the least
    significant bit of the matrix index.
    """
    cdef double[::1] flat = arr.reshape(-1).view(np.float64)
    cdef int k = bitpos.shape[0]
    cdef long dim = 1 << k
    cdef long[::1] offsets = np.zeros(dim, dtype=np.int64)
    cdef long[::1] sorted_pos = np.sort(np.asarray(bitpos, dtype=np.int64))
    # the lowest run of consecutive free (non-target) bits is swept as one
    # strided vector, which keeps the inner loops long even when a target leg
    # sits at bit 0
    cdef long f0 = 0, width = 0
    cdef set targets = set(np.asarray(bitpos).tolist())
    while f0 in targets:
        f0 += 1
    while f0 + width < nbits and (f0 + width) not in targets and width < 6:
        width += 1
    cdef long run = (<long>1) << width
    cdef long stride = (<long>1) << f0
    cdef long nruns = ((<long>1) << (nbits - k)) >> width
    # split real/imaginary parts: plain double arithmetic avoids the slow
    # C99 complex multiply with its inf/nan recovery path
    cdef double[:, ::1] mr = np.ascontiguousarray(np.asarray(mat).real)
    cdef double[:, ::1] mi = np.ascontiguousarray(np.asarray(mat).imag)
    cdef double[:, ::1] br = np.empty((dim, run))
    cdef double[:, ::1] bi = np.empty((dim, run))
    cdef double[::1] accr = np.empty(run)
    cdef double[::1] acci = np.empty(run)
    cdef long a, j, l, blk, base, low, idx
    cdef double xr, xi
    for a in range(dim):
        base = 0
        for j in range(k):
            if (a >> j) & 1:
                base |= (<long>1) << bitpos[j]
        offsets[a] = base
    with nogil:
        for blk in range(nruns):
            base = blk * run
            for j in range(k):
                low = base & (((<long>1) << sorted_pos[j]) - 1)
                base = ((base >> sorted_pos[j]) << (sorted_pos[j] + 1)) | low
            for a in range(dim):
                idx = 2 * (base + offsets[a])
                for l in range(run):
                    br[a, l] = flat[idx + 2 * l * stride]
                    bi[a, l] = flat[idx + 2 * l * stride + 1]
            for a in range(dim):
                for l in range(run):
                    accr[l] = 0.0
                    acci[l] = 0.0
                for j in range(dim):
                    xr = mr[a, j]
                    xi = mi[a, j]
                    if xr == 0.0 and xi == 0.0:
                        continue
                    for l in range(run):
                        accr[l] += xr * br[j, l] - xi * bi[j, l]
                        acci[l] += xr * bi[j, l] + xi * br[j, l]
                idx = 2 * (base + offsets[a])
                for l in range(run):
                    flat[idx + 2 * l * stride] = accr[l]
                    flat[idx + 2 * l * stride + 1] = acci[l]
    return arr


cdef inline int _g(int x1, int z1, int x2, int z2) nogil:
    if x1 == 0 and z1 == 0:
        return 0
    if x1 == 1 and z1 == 1:
        return z2 - x2
    if x1 == 1 and z1 == 0:
        return z2 * (2 * x2 - 1)
    return x2 * (1 - 2 * z2)


def stabilizer_expectation(const unsigned char[:, ::1] x,
                           const unsigned char[:, ::1] z,
                           const unsigned char[::1] r,
                           const unsigned char[::1] px,
                           const unsigned char[::1] pz):
    """Return <P> in {+1, -1, 0} for a tableau with destabilizer rows first."""
    cdef int n = x.shape[1]
    cdef int i, j, s
    cdef int phase = 0
    cdef unsigned char[::1] sx = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] sz = np.zeros(n, dtype=np.uint8)
    # anticommutation with any stabilizer means a uniformly random outcome
    for i in range(n, 2 * n):
        s = 0
        for j in range(n):
            s ^= (x[i, j] & pz[j]) ^ (z[i, j] & px[j])
        if s:
            return 0
    for i in range(n):
        s = 0
        for j in range(n):
            s ^= (x[i, j] & pz[j]) ^ (z[i, j] & px[j])
        if not s:
            continue
        # scratch <- scratch * stabilizer[i]
        s = 2 * phase + 2 * r[n + i]
        for j in range(n):
            s += _g(x[n + i, j], z[n + i, j], sx[j], sz[j])
            sx[j] ^= x[n + i, j]
            sz[j] ^= z[n + i, j]
        s = ((s % 4) + 4) % 4
        phase = 1 if s == 2 else 0
    for j in range(n):
        if sx[j] != px[j] or sz[j] != pz[j]:
            raise RuntimeError("tableau is inconsistent: product does not reproduce P")
    return -1 if phase else 1

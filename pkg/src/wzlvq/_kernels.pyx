# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops; `_kernels_py` holds the reference numpy versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def nearest_box(const double[:, ::1] x, const double[:, ::1] basis,
                const double[:, ::1] inv, const long long[:, ::1] offsets,
                double tol):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1], k = offsets.shape[0]
    cdef Py_ssize_t i, j, a, o
    out = np.empty((m, n), dtype=np.int64)
    cdef long long[:, ::1] res = out
    cdef long long[64] c0
    cdef long long[64] best_c
    cdef double[64] diff
    cdef double t, d, best, acc, coord
    if n > 64:
        raise ValueError("dimension above 64 not supported by the box kernel")
    for i in range(m):
        for j in range(n):
            t = 0.0
            for a in range(n):
                t += inv[j, a] * x[i, a]
            c0[j] = <long long>floor(t + 0.5)
        best = 1e308
        for o in range(k):
            for j in range(n):
                diff[j] = x[i, j]
            for a in range(n):
                coord = <double>(c0[a] + offsets[o, a])
                for j in range(n):
                    diff[j] -= basis[j, a] * coord
            d = 0.0
            for j in range(n):
                d += diff[j] * diff[j]
            if d < best - tol:
                best = d
                for j in range(n):
                    best_c[j] = c0[j] + offsets[o, j]
        for j in range(n):
            res[i, j] = best_c[j]
    return out


def nearest_codebook(const double[:, ::1] x, const double[:, ::1] codebook):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1], k = codebook.shape[0]
    cdef Py_ssize_t i, j, c, arg
    cdef double d, best, u
    out = np.empty(m, dtype=np.int64)
    cdef long long[::1] res = out
    for i in range(m):
        best = 1e308
        arg = 0
        for c in range(k):
            d = 0.0
            for j in range(n):
                u = x[i, j] - codebook[c, j]
                d += u * u
            if d < best:
                best = d
                arg = c
        res[i] = arg
    return out

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled band-matrix kernels.

A row-banded operator is stored as (data, starts, lengths): row i of the
p x p matrix holds the contiguous coefficient run data[i, :lengths[i]]
beginning at column starts[i].  These two kernels are the hot paths behind
every operator application; a numpy fallback with identical semantics lives
in bandops_np.py.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def band_apply_left(const double[:, ::1] data,
                    const cnp.int64_t[::1] starts,
                    const cnp.int64_t[::1] lengths,
                    const double[:, ::1] M,
                    double[:, ::1] out):
    """out <- A @ M for row-banded A (out must be zero-initialised)."""
    cdef Py_ssize_t p = data.shape[0]
    cdef Py_ssize_t q = M.shape[1]
    cdef Py_ssize_t i, k, j, s, L
    cdef double c
    for i in range(p):
        s = starts[i]
        L = lengths[i]
        for k in range(L):
            c = data[i, k]
            if c == 0.0:
                continue
            for j in range(q):
                out[i, j] += c * M[s + k, j]


def band_apply_right(const double[:, ::1] data,
                     const cnp.int64_t[::1] starts,
                     const cnp.int64_t[::1] lengths,
                     const double[:, ::1] X,
                     double[:, ::1] out):
    """out <- X @ A.T for row-banded A (out must be zero-initialised)."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t p = data.shape[0]
    cdef Py_ssize_t r, i, k, s, L
    cdef double acc
    for r in range(n):
        for i in range(p):
            s = starts[i]
            L = lengths[i]
            acc = 0.0
            for k in range(L):
                acc += data[i, k] * X[r, s + k]
            out[r, i] = acc

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batched dense kernels.

Same contracts as :mod:`chunkode._pykernels`; see there for the details.
"""

import numpy as np

from libc.math cimport fabs


cdef Py_ssize_t _factor_one(double[:, ::1] a, long[::1] piv, double tiny) nogil:
    # returns 0 on success, 1 on a tiny pivot
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i, j, k, p
    cdef double scale = 0.0, best, tmp, f
    for i in range(n):
        for j in range(n):
            if fabs(a[i, j]) > scale:
                scale = fabs(a[i, j])
    if scale == 0.0:
        return 1
    for k in range(n):
        p = k
        best = fabs(a[k, k])
        for i in range(k + 1, n):
            if fabs(a[i, k]) > best:
                best = fabs(a[i, k])
                p = i
        piv[k] = p
        if best < tiny * scale:
            return 1
        if p != k:
            for j in range(n):
                tmp = a[k, j]
                a[k, j] = a[p, j]
                a[p, j] = tmp
        for i in range(k + 1, n):
            f = a[i, k] / a[k, k]
            a[i, k] = f
            for j in range(k + 1, n):
                a[i, j] -= f * a[k, j]
    return 0


cdef void _solve_one(const double[:, ::1] lu, const long[::1] piv, double[:, ::1] b) nogil:
    cdef Py_ssize_t n = lu.shape[0]
    cdef Py_ssize_t r = b.shape[1]
    cdef Py_ssize_t i, j, k, c
    cdef double tmp
    for k in range(n):
        if piv[k] != k:
            for c in range(r):
                tmp = b[k, c]
                b[k, c] = b[piv[k], c]
                b[piv[k], c] = tmp
    for i in range(1, n):
        for j in range(i):
            for c in range(r):
                b[i, c] -= lu[i, j] * b[j, c]
    for i in range(n - 1, -1, -1):
        for j in range(i + 1, n):
            for c in range(r):
                b[i, c] -= lu[i, j] * b[j, c]
        for c in range(r):
            b[i, c] /= lu[i, i]


cdef void _solve_vec(const double[:, ::1] lu, const long[::1] piv, double[::1] b) nogil:
    cdef Py_ssize_t n = lu.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double tmp
    for k in range(n):
        if piv[k] != k:
            tmp = b[k]
            b[k] = b[piv[k]]
            b[piv[k]] = tmp
    for i in range(1, n):
        for j in range(i):
            b[i] -= lu[i, j] * b[j]
    for i in range(n - 1, -1, -1):
        for j in range(i + 1, n):
            b[i] -= lu[i, j] * b[j]
        b[i] /= lu[i, i]


def lu_factor(a, double tiny):
    cdef double[:, :, ::1] lu = np.array(a, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t m = lu.shape[0], n = lu.shape[1]
    piv_arr = np.zeros((m, n), dtype=np.int_)
    cdef long[:, ::1] piv = piv_arr
    cdef Py_ssize_t q
    cdef Py_ssize_t bad = -1
    with nogil:
        for q in range(m):
            if _factor_one(lu[q], piv[q], tiny):
                bad = q
                break
    return np.asarray(lu), piv_arr, bad


def lu_solve(lu_in, piv_in, b):
    cdef const double[:, :, ::1] lu = np.ascontiguousarray(lu_in, dtype=np.float64)
    cdef const long[:, ::1] piv = np.ascontiguousarray(piv_in, dtype=np.int_)
    out = np.array(b, dtype=np.float64, order="C", copy=True)
    cdef double[:, :, ::1] x = out
    cdef Py_ssize_t q
    with nogil:
        for q in range(lu.shape[0]):
            _solve_one(lu[q], piv[q], x[q])
    return out


def thomas(lu_in, piv_in, offdiag_in, rhs):
    cdef const double[:, :, :, ::1] lu = np.ascontiguousarray(lu_in, dtype=np.float64)
    cdef const long[:, :, ::1] piv = np.ascontiguousarray(piv_in, dtype=np.int_)
    cdef const double[:, :, :, ::1] off = np.ascontiguousarray(offdiag_in, dtype=np.float64)
    out = np.array(rhs, dtype=np.float64, order="C", copy=True)
    cdef double[:, :, ::1] x = out
    cdef Py_ssize_t nc = lu.shape[0], nb = lu.shape[1], n = lu.shape[2]
    cdef Py_ssize_t k, q, i, j
    cdef double s
    with nogil:
        for k in range(nc):
            for q in range(nb):
                if k > 0:
                    for i in range(n):
                        s = 0.0
                        for j in range(n):
                            s = s + off[k - 1, q, i, j] * x[k - 1, q, j]
                        x[k, q, i] -= s
                _solve_vec(lu[k, q], piv[k, q], x[k, q])
    return out

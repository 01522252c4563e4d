# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the square-free jet algebra.

Every routine works row-wise on C-contiguous ``(n, 2**k)`` coefficient
blocks; rows are independent so callers may batch any number of scalars
(samples times neurons) into one call.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport calloc, free

cnp.import_array()


cdef extern from *:
    int __builtin_popcount(unsigned int) nogil


cdef void _lift_table(const double* d, const double* a, double* F,
                      int k, Py_ssize_t M) noexcept nogil:
    # Mask-major: F[u*(k+1) + m] = coefficient u of f^(m)(a), for m + |u| <= k.
    cdef int i, m, c, top
    cdef int K1 = k + 1
    cdef Py_ssize_t hi, up, u, v
    cdef double aw
    cdef double* row
    cdef const double* src
    for m in range(K1):
        F[m] = d[m]
    for i in range(k):
        hi = 1 << i
        for up in range(hi):
            u = up | hi
            c = __builtin_popcount(<unsigned int>u)
            top = k - c + 1
            row = F + u * K1
            for m in range(top):
                row[m] = 0.0
            v = up
            while True:
                aw = a[(up ^ v) | hi]
                src = F + v * K1 + 1
                for m in range(top):
                    row[m] += src[m] * aw
                if v == 0:
                    break
                v = (v - 1) & up


def lift_forward(const double[:, ::1] derivs, const double[:, ::1] a):
    """Compose a univariate Taylor jet with multidual rows.

    ``derivs[r, m]`` is the m-th derivative of the outer function at
    ``a[r, 0]`` for ``m = 0..k``.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t M = a.shape[1]
    cdef int k = derivs.shape[1] - 1
    if (<Py_ssize_t>1 << k) != M:
        raise ValueError("derivs must carry k+1 columns for 2**k coefficients")
    if derivs.shape[0] != n:
        raise ValueError("row count mismatch")
    out = np.empty((n, M), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double* F = <double*>calloc((k + 1) * M, sizeof(double))
    if F == NULL:
        raise MemoryError()
    cdef Py_ssize_t r, u
    try:
        with nogil:
            for r in range(n):
                _lift_table(&derivs[r, 0], &a[r, 0], F, k, M)
                for u in range(M):
                    o[r, u] = F[u * (k + 1)]
    finally:
        free(F)
    return out


def lift_backward(const double[:, ::1] derivs, const double[:, ::1] a,
                  const double[:, ::1] gout):
    """Adjoint of :func:`lift_forward`.

    Returns ``(gderivs, ga)``. ``ga[:, 0]`` is left at zero; the dependence
    of ``derivs`` on the scalar part is chained by the caller.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t M = a.shape[1]
    cdef int k = derivs.shape[1] - 1
    if (<Py_ssize_t>1 << k) != M or gout.shape[0] != n or gout.shape[1] != M:
        raise ValueError("shape mismatch")
    gd_arr = np.zeros((n, k + 1), dtype=np.float64)
    ga_arr = np.zeros((n, M), dtype=np.float64)
    cdef double[:, ::1] gd = gd_arr
    cdef double[:, ::1] ga = ga_arr
    cdef int K1 = k + 1
    cdef double* F = <double*>calloc(K1 * M, sizeof(double))
    cdef double* G = <double*>calloc(K1 * M, sizeof(double))
    if F == NULL or G == NULL:
        free(F)
        free(G)
        raise MemoryError()
    cdef Py_ssize_t r, u, up, v, w, hi
    cdef int i, m, c, top
    cdef double aw, acc
    cdef const double* ar
    cdef double* grow
    cdef double* gsrc
    cdef double* fsrc
    try:
        with nogil:
            for r in range(n):
                ar = &a[r, 0]
                _lift_table(&derivs[r, 0], ar, F, k, M)
                for u in range(K1 * M):
                    G[u] = 0.0
                for u in range(M):
                    G[u * K1] = gout[r, u]
                for i in range(k - 1, -1, -1):
                    hi = 1 << i
                    for up in range(hi - 1, -1, -1):
                        u = up | hi
                        c = __builtin_popcount(<unsigned int>u)
                        top = k - c + 1
                        grow = G + u * K1
                        v = up
                        while True:
                            w = (up ^ v) | hi
                            aw = ar[w]
                            gsrc = G + v * K1 + 1
                            fsrc = F + v * K1 + 1
                            acc = 0.0
                            for m in range(top):
                                gsrc[m] += grow[m] * aw
                                acc += grow[m] * fsrc[m]
                            ga[r, w] += acc
                            if v == 0:
                                break
                            v = (v - 1) & up
                for m in range(K1):
                    gd[r, m] = G[m]
    finally:
        free(F)
        free(G)
    return gd_arr, ga_arr


def subset_mul(const double[:, ::1] a, const double[:, ::1] b):
    """Row-wise subset convolution ``out[s] = sum_{u <= s} a[u] b[s ^ u]``."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t M = a.shape[1]
    if b.shape[0] != n or b.shape[1] != M:
        raise ValueError("shape mismatch")
    out = np.empty((n, M), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t r, s, u
    cdef double acc
    with nogil:
        for r in range(n):
            for s in range(M):
                acc = 0.0
                u = s
                while True:
                    acc += a[r, u] * b[r, s ^ u]
                    if u == 0:
                        break
                    u = (u - 1) & s
                o[r, s] = acc
    return out

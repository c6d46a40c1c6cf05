# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; same semantics as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, hypot

cnp.import_array()

cdef double EXP_CUTOFF = 50.0


def likelihood_matrix(const double[:, ::1] P, const double[:, ::1] A, const double[::1] z,
                      const double[::1] inv2s2, const double[::1] scale):
    cdef Py_ssize_t n = P.shape[0]
    cdef Py_ssize_t M = z.shape[0]
    out_arr = np.empty((n, M), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, m
    cdef double d, diff, arg
    with nogil:
        for i in range(n):
            d = hypot(P[i, 0] - A[i, 0], P[i, 1] - A[i, 1])
            for m in range(M):
                diff = z[m] - d
                arg = diff * diff * inv2s2[m]
                if arg > EXP_CUTOFF:
                    out[i, m] = 0.0
                else:
                    out[i, m] = scale[m] * exp(-arg)
    return out_arr


def da_ratio(const double[:, ::1] beta, const double[:, ::1] xi, double eps, Py_ssize_t p_max):
    cdef Py_ssize_t K = beta.shape[0]
    cdef Py_ssize_t M = xi.shape[0]
    s_arr = np.ones((M, K), dtype=np.float64)
    t_arr = np.empty((K, M), dtype=np.float64)
    nc_arr = np.empty((K, M), dtype=np.float64)
    nd_arr = np.empty((K, M), dtype=np.float64)
    cdef double[:, ::1] s = s_arr
    cdef double[:, ::1] t = t_arr
    cdef double[:, ::1] nc = nc_arr
    cdef double[:, ::1] nd = nd_arr
    cdef Py_ssize_t k, m, q, it = 0
    cdef double acc, c_new, d_new, delta
    cdef double dM = <double>M
    cdef bint converged = False
    with nogil:
        for k in range(K):
            for m in range(M):
                acc = beta[k, 0]
                for q in range(M):
                    if q != m:
                        acc = acc + beta[k, q + 1]
                t[k, m] = beta[k, m + 1] / acc
                nc[k, m] = 1.0 / (1.0 + dM)
                nd[k, m] = 1.0 / (1.0 + dM)
        while it < p_max:
            it += 1
            for m in range(M):
                for k in range(K):
                    acc = xi[m, 0]
                    for q in range(K):
                        if q != k:
                            acc = acc + xi[m, q + 1] * t[q, m]
                    s[m, k] = xi[m, k + 1] / acc
            delta = 0.0
            for k in range(K):
                for m in range(M):
                    acc = beta[k, 0]
                    for q in range(M):
                        if q != m:
                            acc = acc + beta[k, q + 1] * s[q, k]
                    t[k, m] = beta[k, m + 1] / acc
                    c_new = 1.0 / (1.0 + dM / s[m, k])
                    d_new = 1.0 / (s[m, k] + dM)
                    delta = delta + (c_new - nc[k, m]) ** 2 + dM * (d_new - nd[k, m]) ** 2
                    nc[k, m] = c_new
                    nd[k, m] = d_new
            if sqrt(delta) < eps:
                converged = True
                break
    return s_arr, t_arr, it, converged


def systematic_resample(const double[::1] weights, double u):
    cdef Py_ssize_t n = weights.shape[0]
    cdf_arr = np.cumsum(weights)
    cdf_arr /= cdf_arr[n - 1]
    cdef double[::1] cdf = cdf_arr
    idx_arr = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] idx = idx_arr
    cdef Py_ssize_t i, j = 0
    cdef double pos
    with nogil:
        for i in range(n):
            pos = (u + i) / n
            while j < n - 1 and cdf[j] <= pos:
                j += 1
            idx[i] = j
    return idx_arr

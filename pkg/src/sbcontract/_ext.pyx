# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: log-sum-exp mat-vec, pairwise distance extrema, mixtures."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


def lse_rows(const double[:, ::1] logK, const double[::1] v):
    cdef Py_ssize_t N = logK.shape[0], J = logK.shape[1], i, j
    cdef double mx, s, a
    out = np.empty(N)
    cdef double[::1] o = out
    with nogil:
        for i in range(N):
            mx = -INFINITY
            for j in range(J):
                a = logK[i, j] + v[j]
                if a > mx:
                    mx = a
            if mx == -INFINITY:
                o[i] = -INFINITY
                continue
            s = 0.0
            for j in range(J):
                s += exp(logK[i, j] + v[j] - mx)
            o[i] = mx + log(s)
    return out


def sqdist_extrema(const double[:, ::1] P, const double[:, ::1] Q):
    cdef Py_ssize_t N = P.shape[0], J = Q.shape[0], n = P.shape[1], i, j, k
    cdef Py_ssize_t imax = 0, jmax = 0, imin = 0, jmin = 0
    cdef double d, t, dmax = -1.0, dmin = INFINITY
    with nogil:
        for i in range(N):
            for j in range(J):
                d = 0.0
                for k in range(n):
                    t = P[i, k] - Q[j, k]
                    d += t * t
                if d > dmax:
                    dmax = d
                    imax = i
                    jmax = j
                if d < dmin:
                    dmin = d
                    imin = i
                    jmin = j
    return dmax, imax, jmax, dmin, imin, jmin


def mixture_stats(const double[:, ::1] Z, const double[:, ::1] C, const double[::1] logc):
    cdef Py_ssize_t N = Z.shape[0], J = C.shape[0], n = Z.shape[1], i, j, k
    cdef double mx, s, d, t, p
    lse = np.empty(N)
    mean = np.zeros((N, n))
    buf = np.empty(J)
    cdef double[::1] L = lse
    cdef double[:, ::1] Mn = mean
    cdef double[::1] e = buf
    with nogil:
        for i in range(N):
            mx = -INFINITY
            for j in range(J):
                d = 0.0
                for k in range(n):
                    t = Z[i, k] - C[j, k]
                    d += t * t
                e[j] = logc[j] - 0.5 * d
                if e[j] > mx:
                    mx = e[j]
            if mx == -INFINITY:
                L[i] = -INFINITY
                for k in range(n):
                    Mn[i, k] = 0.0 / 0.0
                continue
            s = 0.0
            for j in range(J):
                p = exp(e[j] - mx)
                s += p
                for k in range(n):
                    Mn[i, k] += p * C[j, k]
            for k in range(n):
                Mn[i, k] /= s
            L[i] = mx + log(s)
    return lse, mean

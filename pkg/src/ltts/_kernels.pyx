# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled TT kernels.  Mirrors ``_fallback``; see there for the packing layout."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()



cdef double _eval_one(const double[::1] flat, const long[::1] offsets,
                      const long[::1] ranks, long m, const double* xi,
                      double* u, double* w, double* v) noexcept nogil:
    cdef long N = ranks.shape[0] - 1
    cdef long k, a, i, j, r0, r1, base
    cdef double acc, x
    u[0] = 1.0
    for k in range(N):
        r0 = ranks[k]
        r1 = ranks[k + 1]
        base = offsets[k]
        x = xi[k]
        v[0] = 1.0
        for a in range(1, m):
            v[a] = v[a - 1] * x / a
        for j in range(r1):
            w[j] = 0.0
        for i in range(r0):
            if u[i] == 0.0:
                continue
            for a in range(m):
                acc = u[i] * v[a]
                for j in range(r1):
                    w[j] += acc * flat[base + (i * m + a) * r1 + j]
        for j in range(r1):
            u[j] = w[j]
    return u[0]


def _maxrank(const long[::1] ranks):
    cdef long k, best = 1
    for k in range(ranks.shape[0]):
        if ranks[k] > best:
            best = ranks[k]
    return best


def tt_eval_point(const double[::1] flat, const long[::1] offsets,
                  const long[::1] ranks, long m, xi):
    cdef const double[::1] x = np.ascontiguousarray(xi, dtype=np.float64)
    cdef long rmax = _maxrank(ranks)
    cdef double u_s[64]
    cdef double w_s[64]
    cdef double v_s[64]
    cdef double *u
    cdef double *w
    cdef double *v
    cdef double out
    if rmax <= 64 and m <= 64:
        return _eval_one(flat, offsets, ranks, m, &x[0], u_s, w_s, v_s)
    u = <double*> malloc(rmax * sizeof(double))
    w = <double*> malloc(rmax * sizeof(double))
    v = <double*> malloc(m * sizeof(double))
    try:
        out = _eval_one(flat, offsets, ranks, m, &x[0], u, w, v)
    finally:
        free(u)
        free(w)
        free(v)
    return out


def tt_eval_batch(const double[::1] flat, const long[::1] offsets,
                  const long[::1] ranks, long m, X):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef long n = Xv.shape[0]
    cdef long s
    cdef long rmax = _maxrank(ranks)
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double *u = <double*> malloc(rmax * sizeof(double))
    cdef double *w = <double*> malloc(rmax * sizeof(double))
    cdef double *v = <double*> malloc(m * sizeof(double))
    try:
        with nogil:
            for s in range(n):
                out[s] = _eval_one(flat, offsets, ranks, m, &Xv[s, 0], u, w, v)
    finally:
        free(u)
        free(w)
        free(v)
    return out_arr


def contract_left(L, core, V):
    """``out[s, j] = sum_{i,a} L[s, i] V[s, a] core[i, a, j]``."""
    cdef const double[:, ::1] Lv = np.ascontiguousarray(L, dtype=np.float64)
    cdef const double[:, :, ::1] G = np.ascontiguousarray(core, dtype=np.float64)
    cdef const double[:, ::1] Vv = np.ascontiguousarray(V, dtype=np.float64)
    cdef long n = Lv.shape[0], r0 = G.shape[0], m = G.shape[1], r1 = G.shape[2]
    cdef long s, i, a, j
    cdef double acc
    out_arr = np.zeros((n, r1), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for s in range(n):
            for i in range(r0):
                for a in range(m):
                    acc = Lv[s, i] * Vv[s, a]
                    for j in range(r1):
                        out[s, j] += acc * G[i, a, j]
    return out_arr


def contract_right(R, core, V):
    """``out[s, i] = sum_{a,j} core[i, a, j] V[s, a] R[s, j]``."""
    cdef const double[:, ::1] Rv = np.ascontiguousarray(R, dtype=np.float64)
    cdef const double[:, :, ::1] G = np.ascontiguousarray(core, dtype=np.float64)
    cdef const double[:, ::1] Vv = np.ascontiguousarray(V, dtype=np.float64)
    cdef long n = Rv.shape[0], r0 = G.shape[0], m = G.shape[1], r1 = G.shape[2]
    cdef long s, i, a, j
    cdef double acc
    out_arr = np.zeros((n, r0), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for s in range(n):
            for i in range(r0):
                acc = 0.0
                for a in range(m):
                    for j in range(r1):
                        acc += G[i, a, j] * Vv[s, a] * Rv[s, j]
                out[s, i] = acc
    return out_arr

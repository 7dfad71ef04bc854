# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: emission table lookups and scaled forward-backward smoothing.

Same contracts as the pure-numpy fallback in ``_core_py``.
"""

import numpy as np

from libc.math cimport exp, log, INFINITY

BACKEND_NAME = "c"


def log_emissions(const short[:, :, ::1] y, const double[:, :, ::1] logphi_pad,
                  double[:, :, ::1] out):
    cdef Py_ssize_t n = y.shape[0], T = y.shape[1], r = y.shape[2]
    cdef Py_ssize_t k = logphi_pad.shape[2]
    cdef Py_ssize_t i, t, j, u
    cdef short cat
    for i in range(n):
        for t in range(T):
            for u in range(k):
                out[i, t, u] = 0.0
            for j in range(r):
                cat = y[i, t, j]
                if cat >= 0:
                    for u in range(k):
                        out[i, t, u] += logphi_pad[j, cat, u]
    return np.asarray(out)


def fb_batch_shared(const double[:, :, ::1] logE, const double[::1] pi,
                    const double[:, ::1] Pi):
    cdef Py_ssize_t n = logE.shape[0], T = logE.shape[1], k = logE.shape[2]
    b_arr = np.empty((n, T, k))
    bb_arr = np.empty((n, T - 1, k, k))
    ll_arr = np.empty(n)
    cdef double[:, :, ::1] b = b_arr
    cdef double[:, :, :, ::1] bb = bb_arr
    cdef double[::1] loglik = ll_arr

    scratch = np.empty((2 * T + 2, k))
    cdef double[:, ::1] E = scratch[:T]
    cdef double[:, ::1] alpha = scratch[T:2 * T]
    cdef double[::1] w = scratch[2 * T]
    cdef double[::1] beta_cur = scratch[2 * T + 1]
    c_arr = np.empty(T)
    beta_next_arr = np.empty(k)
    cdef double[::1] c = c_arr
    cdef double[::1] beta_next = beta_next_arr

    cdef Py_ssize_t i, t, u, v
    cdef double m, s, ct, ll, val

    for i in range(n):
        ll = 0.0
        for t in range(T):
            m = -INFINITY
            for u in range(k):
                if logE[i, t, u] > m:
                    m = logE[i, t, u]
            if m == -INFINITY:
                return None, None, None, (i, t)
            ll += m
            for u in range(k):
                E[t, u] = exp(logE[i, t, u] - m)

        ct = 0.0
        for u in range(k):
            alpha[0, u] = pi[u] * E[0, u]
            ct += alpha[0, u]
        if ct <= 0.0:
            return None, None, None, (i, 0)
        c[0] = ct
        ll += log(ct)
        for u in range(k):
            alpha[0, u] /= ct
        for t in range(1, T):
            ct = 0.0
            for v in range(k):
                s = 0.0
                for u in range(k):
                    s += alpha[t - 1, u] * Pi[u, v]
                alpha[t, v] = s * E[t, v]
                ct += alpha[t, v]
            if ct <= 0.0:
                return None, None, None, (i, t)
            c[t] = ct
            ll += log(ct)
            for v in range(k):
                alpha[t, v] /= ct
        loglik[i] = ll

        for u in range(k):
            beta_next[u] = 1.0
            b[i, T - 1, u] = alpha[T - 1, u]
        for t in range(T - 1, 0, -1):
            for v in range(k):
                w[v] = E[t, v] * beta_next[v]
            for u in range(k):
                s = 0.0
                for v in range(k):
                    val = Pi[u, v] * w[v]
                    bb[i, t - 1, u, v] = alpha[t - 1, u] * val / c[t]
                    s += val
                beta_cur[u] = s / c[t]
                b[i, t - 1, u] = alpha[t - 1, u] * beta_cur[u]
            for u in range(k):
                beta_next[u] = beta_cur[u]

    return b_arr, bb_arr, ll_arr, None


def fb_batch_per_unit(const double[:, :, ::1] logE, const double[:, ::1] pi2,
                      const double[:, :, :, ::1] Pi4):
    cdef Py_ssize_t n = logE.shape[0], T = logE.shape[1], k = logE.shape[2]
    b_arr = np.empty((n, T, k))
    bb_arr = np.empty((n, T - 1, k, k))
    ll_arr = np.empty(n)
    cdef double[:, :, ::1] b = b_arr
    cdef double[:, :, :, ::1] bb = bb_arr
    cdef double[::1] loglik = ll_arr

    scratch = np.empty((2 * T + 2, k))
    cdef double[:, ::1] E = scratch[:T]
    cdef double[:, ::1] alpha = scratch[T:2 * T]
    cdef double[::1] w = scratch[2 * T]
    cdef double[::1] beta_cur = scratch[2 * T + 1]
    c_arr = np.empty(T)
    beta_next_arr = np.empty(k)
    cdef double[::1] c = c_arr
    cdef double[::1] beta_next = beta_next_arr

    cdef Py_ssize_t i, t, u, v
    cdef double m, s, ct, ll, val

    for i in range(n):
        ll = 0.0
        for t in range(T):
            m = -INFINITY
            for u in range(k):
                if logE[i, t, u] > m:
                    m = logE[i, t, u]
            if m == -INFINITY:
                return None, None, None, (i, t)
            ll += m
            for u in range(k):
                E[t, u] = exp(logE[i, t, u] - m)

        ct = 0.0
        for u in range(k):
            alpha[0, u] = pi2[i, u] * E[0, u]
            ct += alpha[0, u]
        if ct <= 0.0:
            return None, None, None, (i, 0)
        c[0] = ct
        ll += log(ct)
        for u in range(k):
            alpha[0, u] /= ct
        for t in range(1, T):
            ct = 0.0
            for v in range(k):
                s = 0.0
                for u in range(k):
                    s += alpha[t - 1, u] * Pi4[i, t - 1, u, v]
                alpha[t, v] = s * E[t, v]
                ct += alpha[t, v]
            if ct <= 0.0:
                return None, None, None, (i, t)
            c[t] = ct
            ll += log(ct)
            for v in range(k):
                alpha[t, v] /= ct
        loglik[i] = ll

        for u in range(k):
            beta_next[u] = 1.0
            b[i, T - 1, u] = alpha[T - 1, u]
        for t in range(T - 1, 0, -1):
            for v in range(k):
                w[v] = E[t, v] * beta_next[v]
            for u in range(k):
                s = 0.0
                for v in range(k):
                    val = Pi4[i, t - 1, u, v] * w[v]
                    bb[i, t - 1, u, v] = alpha[t - 1, u] * val / c[t]
                    s += val
                beta_cur[u] = s / c[t]
                b[i, t - 1, u] = alpha[t - 1, u] * beta_cur[u]
            for u in range(k):
                beta_next[u] = beta_cur[u]

    return b_arr, bb_arr, ll_arr, None

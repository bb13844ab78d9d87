# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled linear-chain CRF dynamic programs.

Mirrors ``_pure.py`` operation for operation; the two backends must agree
to rounding (Viterbi scores bit-for-bit).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


cdef inline double _lse_col(double[:, ::1] prev_plus_trans, Py_ssize_t j, Py_ssize_t k) noexcept nogil:
    cdef double m = -INFINITY
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(k):
        if prev_plus_trans[i, j] > m:
            m = prev_plus_trans[i, j]
    if m == -INFINITY:
        return m
    for i in range(k):
        s += exp(prev_plus_trans[i, j] - m)
    return m + log(s)


def forward_backward(double[:, ::1] e, double[:, ::1] trans, double[::1] start, double[::1] end):
    """Return ``(alpha, beta, logZ)`` in log space."""
    cdef Py_ssize_t n = e.shape[0]
    cdef Py_ssize_t k = e.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double m, s, v
    alpha_np = np.empty((n, k), dtype=np.float64)
    beta_np = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] alpha = alpha_np
    cdef double[:, ::1] beta = beta_np
    cdef double[:, ::1] work = np.empty((k, k), dtype=np.float64)
    cdef double log_z

    with nogil:
        for j in range(k):
            alpha[0, j] = start[j] + e[0, j]
        for t in range(1, n):
            for i in range(k):
                for j in range(k):
                    work[i, j] = alpha[t - 1, i] + trans[i, j]
            for j in range(k):
                alpha[t, j] = _lse_col(work, j, k) + e[t, j]

        for j in range(k):
            beta[n - 1, j] = end[j]
        for t in range(n - 2, -1, -1):
            for i in range(k):
                m = -INFINITY
                for j in range(k):
                    v = trans[i, j] + e[t + 1, j] + beta[t + 1, j]
                    if v > m:
                        m = v
                s = 0.0
                for j in range(k):
                    s += exp(trans[i, j] + e[t + 1, j] + beta[t + 1, j] - m)
                beta[t, i] = m + log(s)

        m = -INFINITY
        for j in range(k):
            v = alpha[n - 1, j] + end[j]
            if v > m:
                m = v
        s = 0.0
        for j in range(k):
            s += exp(alpha[n - 1, j] + end[j] - m)
        log_z = m + log(s)
    return alpha_np, beta_np, log_z


def transition_expectations(double[:, ::1] e, double[:, ::1] trans,
                            double[:, ::1] alpha, double[:, ::1] beta, double log_z):
    """Expected transition counts ``sum_t p(y_{t-1}=i, y_t=j)``."""
    cdef Py_ssize_t n = e.shape[0]
    cdef Py_ssize_t k = e.shape[1]
    cdef Py_ssize_t t, i, j
    out_np = np.zeros((k, k), dtype=np.float64)
    cdef double[:, ::1] out = out_np
    with nogil:
        for t in range(1, n):
            for i in range(k):
                for j in range(k):
                    out[i, j] += exp(alpha[t - 1, i] + trans[i, j] + e[t, j] + beta[t, j] - log_z)
    return out_np


def viterbi(double[:, ::1] e, double[:, ::1] trans, double[::1] start, double[::1] end):
    """Best path and its score; ties resolve to the lowest tag index."""
    cdef Py_ssize_t n = e.shape[0]
    cdef Py_ssize_t k = e.shape[1]
    cdef Py_ssize_t t, i, j, best_i
    cdef double best, v
    delta_np = np.empty((n, k), dtype=np.float64)
    back_np = np.zeros((n, k), dtype=np.int64)
    path_np = np.empty(n, dtype=np.int64)
    cdef double[:, ::1] delta = delta_np
    cdef cnp.int64_t[:, ::1] back = back_np
    cdef cnp.int64_t[::1] path = path_np

    with nogil:
        for j in range(k):
            delta[0, j] = start[j] + e[0, j]
        for t in range(1, n):
            for j in range(k):
                best = delta[t - 1, 0] + trans[0, j]
                best_i = 0
                for i in range(1, k):
                    v = delta[t - 1, i] + trans[i, j]
                    if v > best:
                        best = v
                        best_i = i
                delta[t, j] = best + e[t, j]
                back[t, j] = best_i
        best = delta[n - 1, 0] + end[0]
        best_i = 0
        for j in range(1, k):
            v = delta[n - 1, j] + end[j]
            if v > best:
                best = v
                best_i = j
        path[n - 1] = best_i
        for t in range(n - 1, 0, -1):
            path[t - 1] = back[t, path[t]]
    return path_np, best

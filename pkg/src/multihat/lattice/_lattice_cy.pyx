# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython transducer lattice kernel (hot-loop backend).

Same contract as ``_lattice_py``: forward alpha recursion in log space,
backward beta recursion plus occupancy gradients of the negative
log-likelihood. Kept in lockstep with the pure-Python kernel; the test
suite and the benchmark script compare the two.
"""

from libc.math cimport exp, log1p

import numpy as np

cdef double NEG_INF = float("-inf")


cdef inline double logaddexp(double a, double b) noexcept nogil:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


def lattice_forward(double[:, ::1] log_blank, double[:, ::1] log_emit):
    """Return (log-likelihood, alpha) for one lattice."""
    cdef Py_ssize_t T = log_blank.shape[0]
    cdef Py_ssize_t U1 = log_blank.shape[1]
    cdef Py_ssize_t U = U1 - 1
    alpha_arr = np.empty((T, U1))
    cdef double[:, ::1] alpha = alpha_arr
    cdef Py_ssize_t t, u
    cdef double loglike

    with nogil:
        alpha[0, 0] = 0.0
        for u in range(1, U1):
            alpha[0, u] = alpha[0, u - 1] + log_emit[0, u - 1]
        for t in range(1, T):
            alpha[t, 0] = alpha[t - 1, 0] + log_blank[t - 1, 0]
            for u in range(1, U1):
                alpha[t, u] = logaddexp(
                    alpha[t - 1, u] + log_blank[t - 1, u],
                    alpha[t, u - 1] + log_emit[t, u - 1],
                )
        loglike = alpha[T - 1, U] + log_blank[T - 1, U]
    return loglike, alpha_arr


def lattice_grads(double[:, ::1] log_blank, double[:, ::1] log_emit,
                  double[:, ::1] alpha, double loglike):
    """Gradients of -loglike w.r.t. the two grids (negated occupancies)."""
    cdef Py_ssize_t T = log_blank.shape[0]
    cdef Py_ssize_t U1 = log_blank.shape[1]
    cdef Py_ssize_t U = U1 - 1
    beta_arr = np.empty((T, U1))
    g_blank_arr = np.zeros((T, U1))
    g_emit_arr = np.zeros((T, U))
    cdef double[:, ::1] beta = beta_arr
    cdef double[:, ::1] g_blank = g_blank_arr
    cdef double[:, ::1] g_emit = g_emit_arr
    cdef Py_ssize_t t, u

    with nogil:
        beta[T - 1, U] = log_blank[T - 1, U]
        for u in range(U - 1, -1, -1):
            beta[T - 1, u] = log_emit[T - 1, u] + beta[T - 1, u + 1]
        for t in range(T - 2, -1, -1):
            beta[t, U] = log_blank[t, U] + beta[t + 1, U]
            for u in range(U - 1, -1, -1):
                beta[t, u] = logaddexp(
                    log_blank[t, u] + beta[t + 1, u],
                    log_emit[t, u] + beta[t, u + 1],
                )
        for t in range(T - 1):
            for u in range(U1):
                g_blank[t, u] = -exp(alpha[t, u] + log_blank[t, u] + beta[t + 1, u] - loglike)
        g_blank[T - 1, U] = -1.0
        for t in range(T):
            for u in range(U):
                g_emit[t, u] = -exp(alpha[t, u] + log_emit[t, u] + beta[t, u + 1] - loglike)
    return g_blank_arr, g_emit_arr

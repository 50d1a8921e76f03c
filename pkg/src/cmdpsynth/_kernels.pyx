# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simplex pivot loop and Monte Carlo rollouts.

Mirrors ``_kernels_py`` operation for operation; see that module for the
calling conventions. Build with ``-ffp-contract=off`` so no fused
multiply-adds change the rounding.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()

cdef enum:
    OPTIMAL = 0
    UNBOUNDED = 1
    ITERATION_LIMIT = 2


cdef inline void _pivot(double[:, ::1] T, Py_ssize_t p, Py_ssize_t q) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef Py_ssize_t rows = T.shape[0]
    cdef Py_ssize_t cols = T.shape[1]
    cdef double piv = T[p, q]
    cdef double f
    for j in range(cols):
        T[p, j] = T[p, j] / piv
    for i in range(rows):
        if i == p:
            continue
        f = T[i, q]
        if f == 0.0:
            continue
        for j in range(cols):
            T[i, j] = T[i, j] - f * T[p, j]


def pivot(double[:, ::1] T, Py_ssize_t p, Py_ssize_t q):
    _pivot(T, p, q)


def simplex_iterate(double[:, ::1] T, cnp.int64_t[::1] basis, Py_ssize_t n_enter,
                    Py_ssize_t max_iter, double pivot_tol, double cost_tol, trace=None):
    if trace is not None:
        from cmdpsynth import _kernels_py
        return _kernels_py.simplex_iterate(np.asarray(T), np.asarray(basis), n_enter,
                                           max_iter, pivot_tol, cost_tol, trace)
    cdef Py_ssize_t m = T.shape[0] - 1
    cdef Py_ssize_t rhs = T.shape[1] - 1
    cdef Py_ssize_t it = 0
    cdef Py_ssize_t q, p, i, j
    cdef double best, ratio, bound
    cdef cnp.int64_t best_basis
    cdef int status
    with nogil:
        while True:
            q = -1
            for j in range(n_enter):
                if T[m, j] < -cost_tol:
                    q = j
                    break
            if q < 0:
                status = OPTIMAL
                break
            if it >= max_iter:
                status = ITERATION_LIMIT
                break
            best = INFINITY
            for i in range(m):
                if T[i, q] > pivot_tol:
                    ratio = T[i, rhs] / T[i, q]
                    if ratio < best:
                        best = ratio
            if best == INFINITY:
                status = UNBOUNDED
                break
            bound = best + 1e-12 * (1.0 + fabs(best))
            p = -1
            best_basis = 0
            for i in range(m):
                if T[i, q] > pivot_tol:
                    ratio = T[i, rhs] / T[i, q]
                    if ratio <= bound and (p < 0 or basis[i] < best_basis):
                        p = i
                        best_basis = basis[i]
            _pivot(T, p, q)
            basis[p] = q
            it += 1
    return status, it


def rollouts(const double[::1] cum_x1, const double[:, :, ::1] cum_q, const double[:, :, :, ::1] cum_g,
             const double[:, :, ::1] rewards, const double[::1] terminal, const double[:, ::1] u):
    cdef Py_ssize_t n_rollouts = u.shape[0]
    cdef Py_ssize_t horizon = cum_q.shape[0]
    cdef Py_ssize_t n = cum_x1.shape[0]
    cdef Py_ssize_t n_actions = cum_q.shape[2]
    cdef Py_ssize_t r, t, s, a, j
    cdef double acc, draw
    out = np.empty(n_rollouts, dtype=np.float64)
    cdef double[::1] total = out
    with nogil:
        for r in range(n_rollouts):
            draw = u[r, 0]
            s = 0
            while s < n - 1 and not (draw < cum_x1[s]):
                s += 1
            acc = 0.0
            for t in range(horizon):
                draw = u[r, 1 + 2 * t]
                a = 0
                while a < n_actions - 1 and not (draw < cum_q[t, s, a]):
                    a += 1
                acc = acc + rewards[t, s, a]
                draw = u[r, 2 + 2 * t]
                j = s
                s = 0
                while s < n - 1 and not (draw < cum_g[t, a, j, s]):
                    s += 1
            acc = acc + terminal[s]
            total[r] = acc
    return out

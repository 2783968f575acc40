# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twin of carnotlab.kernels.pure (see that module for semantics)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport M_PI, fabs, sin, sqrt

cnp.import_array()


def heisenberg_distance(points):
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=np.float64)))
    cdef double[:, ::1] P = pts
    cdef Py_ssize_t B = P.shape[0]
    out_arr = np.empty(B, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t b
    cdef int it
    cdef double x, y, t, rho, tau, mu, lo, hi, mid, s, g, theta
    for b in range(B):
        x = P[b, 0]
        y = P[b, 1]
        t = P[b, 2]
        rho = sqrt(x * x + y * y)
        tau = fabs(t)
        if rho == 0.0:
            out[b] = 2.0 * sqrt(M_PI * tau)
            continue
        mu = tau / (rho * rho)
        if mu < 1e-8:
            out[b] = rho
        elif mu > 1e8:
            out[b] = 2.0 * sqrt(M_PI * tau)
        else:
            lo = 1e-9
            hi = 2.0 * M_PI - 1e-12
            for it in range(60):
                mid = 0.5 * (lo + hi)
                s = sin(0.5 * mid)
                g = (mid - sin(mid)) / (8.0 * s * s)
                if g > mu:
                    hi = mid
                else:
                    lo = mid
            theta = 0.5 * (lo + hi)
            out[b] = theta * rho / (2.0 * sin(0.5 * theta))
    if np.asarray(points).ndim == 1:
        return float(out_arr[0])
    return out_arr


cdef inline void _velocity(const cnp.int64_t[:, ::1] expo, const double[::1] coef,
                           const cnp.int64_t[::1] field, const cnp.int64_t[::1] slot,
                           double[:, ::1] X, const double[:, :] U,
                           double[:, ::1] out) noexcept:
    cdef Py_ssize_t B = X.shape[0]
    cdef Py_ssize_t n = X.shape[1]
    cdef Py_ssize_t T = coef.shape[0]
    cdef Py_ssize_t b, t, k
    cdef cnp.int64_t e
    cdef double m
    for b in range(B):
        for k in range(n):
            out[b, k] = 0.0
        for t in range(T):
            m = coef[t] * U[b, field[t]]
            for k in range(n):
                e = expo[t, k]
                while e > 0:
                    m *= X[b, k]
                    e -= 1
            out[b, slot[t]] += m


cdef inline void _vjps(const cnp.int64_t[:, ::1] expo, const double[::1] coef,
                       const cnp.int64_t[::1] field, const cnp.int64_t[::1] slot,
                       double[:, ::1] X, const double[:, :] U,
                       const double[:, ::1] bar,
                       double[:, ::1] bar_x, double[:, ::1] bar_u) noexcept:
    cdef Py_ssize_t B = X.shape[0]
    cdef Py_ssize_t n = X.shape[1]
    cdef Py_ssize_t T = coef.shape[0]
    cdef Py_ssize_t b, t, k, kk
    cdef cnp.int64_t e
    cdef double m, w, wu, g
    for b in range(B):
        for k in range(n):
            bar_x[b, k] = 0.0
        for k in range(U.shape[1]):
            bar_u[b, k] = 0.0
        for t in range(T):
            w = coef[t] * bar[b, slot[t]]
            m = 1.0
            for k in range(n):
                e = expo[t, k]
                while e > 0:
                    m *= X[b, k]
                    e -= 1
            bar_u[b, field[t]] += w * m
            wu = w * U[b, field[t]]
            for k in range(n):
                e = expo[t, k]
                if e == 0:
                    continue
                g = <double>e
                for kk in range(n):
                    if kk == k:
                        e = expo[t, kk] - 1
                    else:
                        e = expo[t, kk]
                    while e > 0:
                        g *= X[b, kk]
                        e -= 1
                bar_x[b, k] += wu * g


cdef inline void _rk4_step(const cnp.int64_t[:, ::1] expo, const double[::1] coef,
                           const cnp.int64_t[::1] field, const cnp.int64_t[::1] slot,
                           double[:, ::1] X, const double[:, :] U, double h,
                           double[:, ::1] k1, double[:, ::1] k2,
                           double[:, ::1] k3, double[:, ::1] k4,
                           double[:, ::1] tmp) noexcept:
    cdef Py_ssize_t B = X.shape[0]
    cdef Py_ssize_t n = X.shape[1]
    cdef Py_ssize_t b, k
    _velocity(expo, coef, field, slot, X, U, k1)
    for b in range(B):
        for k in range(n):
            tmp[b, k] = X[b, k] + 0.5 * h * k1[b, k]
    _velocity(expo, coef, field, slot, tmp, U, k2)
    for b in range(B):
        for k in range(n):
            tmp[b, k] = X[b, k] + 0.5 * h * k2[b, k]
    _velocity(expo, coef, field, slot, tmp, U, k3)
    for b in range(B):
        for k in range(n):
            tmp[b, k] = X[b, k] + h * k3[b, k]
    _velocity(expo, coef, field, slot, tmp, U, k4)
    for b in range(B):
        for k in range(n):
            X[b, k] = X[b, k] + (h / 6.0) * (k1[b, k] + 2.0 * k2[b, k] + 2.0 * k3[b, k] + k4[b, k])


def propagate(expo, coef, field, slot, x0, controls, double dt, int substeps=1):
    cdef cnp.int64_t[:, ::1] E = np.ascontiguousarray(expo, dtype=np.int64)
    cdef double[::1] C = np.ascontiguousarray(coef, dtype=np.float64)
    cdef cnp.int64_t[::1] F = np.ascontiguousarray(field, dtype=np.int64)
    cdef cnp.int64_t[::1] S = np.ascontiguousarray(slot, dtype=np.int64)
    x_arr = np.array(x0, dtype=np.float64, copy=True, order="C")
    u_arr = np.ascontiguousarray(controls, dtype=np.float64)
    cdef double[:, ::1] X = x_arr
    cdef double[:, :, ::1] U = u_arr
    cdef Py_ssize_t B = X.shape[0]
    cdef Py_ssize_t n = X.shape[1]
    cdef Py_ssize_t N = U.shape[1]
    cdef double h = dt / substeps
    k1_a = np.empty((B, n)); k2_a = np.empty((B, n))
    k3_a = np.empty((B, n)); k4_a = np.empty((B, n)); tmp_a = np.empty((B, n))
    cdef double[:, ::1] k1 = k1_a, k2 = k2_a, k3 = k3_a, k4 = k4_a, tmp = tmp_a
    cdef Py_ssize_t seg, sub
    for seg in range(N):
        for sub in range(substeps):
            _rk4_step(E, C, F, S, X, U[:, seg, :], h, k1, k2, k3, k4, tmp)
    return x_arr


def propagate_with_grad(expo, coef, field, slot, x0, controls, double dt, bar, int substeps=1):
    cdef cnp.int64_t[:, ::1] E = np.ascontiguousarray(expo, dtype=np.int64)
    cdef double[::1] C = np.ascontiguousarray(coef, dtype=np.float64)
    cdef cnp.int64_t[::1] F = np.ascontiguousarray(field, dtype=np.int64)
    cdef cnp.int64_t[::1] S = np.ascontiguousarray(slot, dtype=np.int64)
    u_arr = np.ascontiguousarray(controls, dtype=np.float64)
    cdef double[:, :, ::1] U = u_arr
    cdef Py_ssize_t B = U.shape[0]
    cdef Py_ssize_t N = U.shape[1]
    cdef Py_ssize_t r = U.shape[2]
    x_arr = np.array(x0, dtype=np.float64, copy=True, order="C")
    cdef Py_ssize_t n = x_arr.shape[1]
    cdef double h = dt / substeps
    cdef Py_ssize_t steps = N * substeps

    states_a = np.empty((steps + 1, B, n))
    cdef double[:, :, ::1] states = states_a
    cdef double[:, ::1] X = x_arr
    k1_a = np.empty((B, n)); k2_a = np.empty((B, n))
    k3_a = np.empty((B, n)); k4_a = np.empty((B, n)); tmp_a = np.empty((B, n))
    cdef double[:, ::1] k1 = k1_a, k2 = k2_a, k3 = k3_a, k4 = k4_a, tmp = tmp_a
    cdef Py_ssize_t step, seg, b, k
    states_a[0] = x_arr
    for step in range(steps):
        seg = step // substeps
        _rk4_step(E, C, F, S, X, U[:, seg, :], h, k1, k2, k3, k4, tmp)
        for b in range(B):
            for k in range(n):
                states[step + 1, b, k] = X[b, k]

    grad_a = np.zeros((B, N, r))
    cdef double[:, :, ::1] grad = grad_a
    bar_arr = np.array(bar, dtype=np.float64, copy=True, order="C")
    cdef double[:, ::1] bar_x = bar_arr
    a2_a = np.empty((B, n)); a3_a = np.empty((B, n)); a4_a = np.empty((B, n))
    cdef double[:, ::1] a2 = a2_a, a3 = a3_a, a4 = a4_a
    bk_a = np.empty((B, n)); ax_a = np.empty((B, n)); au_a = np.empty((B, r))
    cdef double[:, ::1] bk = bk_a, ax = ax_a, au = au_a
    acc_x_a = np.empty((B, n))
    cdef double[:, ::1] acc_x = acc_x_a
    bk1_a = np.empty((B, n)); bk2_a = np.empty((B, n)); bk3_a = np.empty((B, n))
    cdef double[:, ::1] bk1 = bk1_a, bk2 = bk2_a, bk3 = bk3_a

    for step in range(steps - 1, -1, -1):
        seg = step // substeps
        xs = states_a[step]
        Xs = np.ascontiguousarray(xs)
        # recompute stage points
        _velocity(E, C, F, S, Xs, U[:, seg, :], k1)
        for b in range(B):
            for k in range(n):
                a2[b, k] = states[step, b, k] + 0.5 * h * k1[b, k]
        _velocity(E, C, F, S, a2, U[:, seg, :], k2)
        for b in range(B):
            for k in range(n):
                a3[b, k] = states[step, b, k] + 0.5 * h * k2[b, k]
        _velocity(E, C, F, S, a3, U[:, seg, :], k3)
        for b in range(B):
            for k in range(n):
                a4[b, k] = states[step, b, k] + h * k3[b, k]

        for b in range(B):
            for k in range(n):
                acc_x[b, k] = bar_x[b, k]

        # k4 adjoint
        for b in range(B):
            for k in range(n):
                bk[b, k] = (h / 6.0) * bar_x[b, k]
        _vjps(E, C, F, S, a4, U[:, seg, :], bk, ax, au)
        for b in range(B):
            for k in range(n):
                acc_x[b, k] += ax[b, k]
                bk3[b, k] = (h / 3.0) * bar_x[b, k] + h * ax[b, k]
            for k in range(r):
                grad[b, seg, k] += au[b, k]
        # k3 adjoint
        _vjps(E, C, F, S, a3, U[:, seg, :], bk3, ax, au)
        for b in range(B):
            for k in range(n):
                acc_x[b, k] += ax[b, k]
                bk2[b, k] = (h / 3.0) * bar_x[b, k] + 0.5 * h * ax[b, k]
            for k in range(r):
                grad[b, seg, k] += au[b, k]
        # k2 adjoint
        _vjps(E, C, F, S, a2, U[:, seg, :], bk2, ax, au)
        for b in range(B):
            for k in range(n):
                acc_x[b, k] += ax[b, k]
                bk1[b, k] = (h / 6.0) * bar_x[b, k] + 0.5 * h * ax[b, k]
            for k in range(r):
                grad[b, seg, k] += au[b, k]
        # k1 adjoint
        _vjps(E, C, F, S, Xs, U[:, seg, :], bk1, ax, au)
        for b in range(B):
            for k in range(n):
                acc_x[b, k] += ax[b, k]
            for k in range(r):
                grad[b, seg, k] += au[b, k]

        for b in range(B):
            for k in range(n):
                bar_x[b, k] = acc_x[b, k]

    return states_a[steps], grad_a

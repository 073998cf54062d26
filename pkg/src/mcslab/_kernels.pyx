# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: tridiagonal solves and the short-rate path step.

Signatures match ``_kernels_py`` exactly; see that module for the
reference semantics.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, floor

cnp.import_array()


def thomas(const double[::1] lower, const double[::1] diag, const double[::1] upper,
           const double[::1] rhs):
    cdef Py_ssize_t n = diag.shape[0], i
    cdef double[::1] c = np.empty(n)
    out = np.empty(n)
    cdef double[::1] x = out
    cdef double m
    if n == 0:
        return out
    c[0] = upper[0] / diag[0]
    x[0] = rhs[0] / diag[0]
    with nogil:
        for i in range(1, n):
            m = diag[i] - lower[i] * c[i - 1]
            if i < n - 1:
                c[i] = upper[i] / m
            x[i] = (rhs[i] - lower[i] * x[i - 1]) / m
        for i in range(n - 2, -1, -1):
            x[i] -= c[i] * x[i + 1]
    return out


cdef inline double _cell(double x, double x0, double dx, Py_ssize_t n, Py_ssize_t* idx, int* clamped) nogil:
    cdef double u = (x - x0) / dx
    cdef double j
    if u < 0.0:
        u = 0.0
        clamped[0] = 1
    elif u > n - 1:
        u = n - 1
        clamped[0] = 1
    j = floor(u)
    if j > n - 2:
        j = n - 2
    idx[0] = <Py_ssize_t>j
    return u - j


def rate_block(double[::1] r, double[::1] logy, double[::1] drain, double[::1] w,
               double[::1] budget, double[::1] logc,
               const double[:, ::1] z1, const double[:, ::1] z2,
               double t_start, double dt, double T,
               double theta, double decay, double sd, double lam1, double lam2,
               double tab_t0, double tab_dt, double tab_r0, double tab_dr,
               const double[:, ::1] q_tab, const double[:, ::1] e1_tab, const double[:, ::1] e2_tab,
               const long[::1] window_id, double[:, ::1] qv):
    cdef Py_ssize_t m = z1.shape[0], P = z1.shape[1]
    cdef Py_ssize_t n_t = q_tab.shape[0], n_r = q_tab.shape[1]
    cdef Py_ssize_t k, p, it0, it1, jr
    cdef double t, t1, ft0, ft1, fr, sdt = sqrt(dt)
    cdef double rr, e1, e2, q1, a1, w1, lc, g_old, g_new, tau0, tau1, step_log
    cdef double c00, c01, c10, c11
    cdef long wid
    cdef int clamp_t = 0, clamp_r = 0
    cdef long n_clamped = 0
    # exp(-drain) carried from one step to the next
    cdef double[::1] edrain = np.exp(-np.asarray(drain))
    with nogil:
        for k in range(m):
            t = t_start + k * dt
            t1 = t + dt
            tau0 = T - t
            tau1 = T - t1
            step_log = log(tau0 / tau1)
            ft0 = _cell(t, tab_t0, tab_dt, n_t, &it0, &clamp_t)
            ft1 = _cell(t1, tab_t0, tab_dt, n_t, &it1, &clamp_t)
            wid = window_id[k]
            for p in range(P):
                rr = r[p]
                clamp_r = 0
                fr = _cell(rr, tab_r0, tab_dr, n_r, &jr, &clamp_r)
                c00 = (1.0 - ft0) * (1.0 - fr)
                c01 = (1.0 - ft0) * fr
                c10 = ft0 * (1.0 - fr)
                c11 = ft0 * fr
                e1 = (c00 * e1_tab[it0, jr] + c01 * e1_tab[it0, jr + 1]
                      + c10 * e1_tab[it0 + 1, jr] + c11 * e1_tab[it0 + 1, jr + 1])
                e2 = (c00 * e2_tab[it0, jr] + c01 * e2_tab[it0, jr + 1]
                      + c10 * e2_tab[it0 + 1, jr] + c11 * e2_tab[it0 + 1, jr + 1])
                g_old = edrain[p] * (1.0 / tau0 + w[p])
                logy[p] += ((rr + e1 * lam1 + e2 * lam2 - 0.5 * (e1 * e1 + e2 * e2)) * dt
                            + sdt * (e1 * z1[k, p] + e2 * z2[k, p]))
                rr = theta + (rr - theta) * decay - sd * z1[k, p]
                fr = _cell(rr, tab_r0, tab_dr, n_r, &jr, &clamp_r)
                q1 = ((1.0 - ft1) * ((1.0 - fr) * q_tab[it1, jr] + fr * q_tab[it1, jr + 1])
                      + ft1 * ((1.0 - fr) * q_tab[it1 + 1, jr] + fr * q_tab[it1 + 1, jr + 1]))
                a1 = tau1 * q1
                w1 = (1.0 / q1 - 1.0) / tau1
                drain[p] += step_log + 0.5 * dt * (w[p] + w1)
                edrain[p] = exp(-drain[p])
                g_new = edrain[p] * (1.0 / tau1 + w1)
                budget[p] += 0.5 * dt * (g_old + g_new)
                lc = logy[p] - drain[p] - log(a1)
                if wid >= 0:
                    qv[wid, p] += (lc - logc[p]) * (lc - logc[p])
                logc[p] = lc
                w[p] = w1
                r[p] = rr
                n_clamped += clamp_r
    return n_clamped

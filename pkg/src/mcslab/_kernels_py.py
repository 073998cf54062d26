"""Reference NumPy/SciPy implementations of the hot kernels.

Used when the compiled extension is unavailable, or when
``MCSLAB_PURE_PYTHON`` is set.
"""

import numpy as np
from scipy.linalg import solve_banded


def thomas(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``lower[0]`` and ``upper[-1]`` are ignored."""
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def _cell(x, x0, dx, n):
    u = (x - x0) / dx
    clamped = (u < 0.0) | (u > n - 1)
    u = np.clip(u, 0.0, n - 1)
    j = np.minimum(np.floor(u), n - 2)
    return j.astype(np.intp), u - j, clamped


def rate_block(r, logy, drain, w, budget, logc, z1, z2, t_start, dt, T,
               theta, decay, sd, lam1, lam2, tab_t0, tab_dt, tab_r0, tab_dr,
               q_tab, e1_tab, e2_tab, window_id, qv):
    """Advance short-rate paths over ``z1.shape[0]`` steps in place.

    Per step and path: bilinear exposures at (t, r), exact log-wealth
    increment, exact OU rate update, factor ``a = (T - t) q`` at the new
    point, drain ``int 1/a`` with the ``1/(T - t)`` singularity integrated
    exactly and the smooth remainder by the trapezoid rule, the budget
    integral ``int e^{-D}/a`` and, inside volatility windows, squared
    log-consumption increments. Returns the number of clamped rate lookups.
    """
    n_t, n_r = q_tab.shape
    sdt = np.sqrt(dt)
    n_clamped = 0
    edrain = np.exp(-drain)
    for k in range(z1.shape[0]):
        t = t_start + k * dt
        t1 = t + dt
        tau0, tau1 = T - t, T - t1
        it0, ft0, _ = _cell(np.float64(t), tab_t0, tab_dt, n_t)
        it1, ft1, _ = _cell(np.float64(t1), tab_t0, tab_dt, n_t)
        jr, fr, _ = _cell(r, tab_r0, tab_dr, n_r)

        def at0(tab):
            lo = (1.0 - fr) * tab[it0, jr] + fr * tab[it0, jr + 1]
            hi = (1.0 - fr) * tab[it0 + 1, jr] + fr * tab[it0 + 1, jr + 1]
            return (1.0 - ft0) * lo + ft0 * hi

        e1 = at0(e1_tab)
        e2 = at0(e2_tab)
        g_old = edrain * (1.0 / tau0 + w)
        logy += (r + e1 * lam1 + e2 * lam2 - 0.5 * (e1 * e1 + e2 * e2)) * dt + sdt * (e1 * z1[k] + e2 * z2[k])
        r[:] = theta + (r - theta) * decay - sd * z1[k]
        jr, fr, clamped = _cell(r, tab_r0, tab_dr, n_r)
        n_clamped += int(np.count_nonzero(clamped))
        lo = (1.0 - fr) * q_tab[it1, jr] + fr * q_tab[it1, jr + 1]
        hi = (1.0 - fr) * q_tab[it1 + 1, jr] + fr * q_tab[it1 + 1, jr + 1]
        q1 = (1.0 - ft1) * lo + ft1 * hi
        w1 = (1.0 / q1 - 1.0) / tau1
        drain += np.log(tau0 / tau1) + 0.5 * dt * (w + w1)
        edrain = np.exp(-drain)
        budget += 0.5 * dt * (g_old + edrain * (1.0 / tau1 + w1))
        lc = logy - drain - np.log(tau1 * q1)
        if window_id[k] >= 0:
            qv[window_id[k]] += (lc - logc) ** 2
        logc[:] = lc
        w[:] = w1
    return n_clamped

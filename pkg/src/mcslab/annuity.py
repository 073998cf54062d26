"""Annuity factors B_f and the (t, r) annuity ansatz a = B_{r g + h}.

``annuity_factor`` is the present value at ``t`` of a continuous unit
payment stream on ``[t, T]`` discounted at the rate curve ``f``. Its
time derivative obeys ``dB/dt = f B - 1``; ``factor_ode_residual`` checks
that numerically.
"""

from dataclasses import dataclass

import numpy as np

from .curves import Constant, Curve, FunctionCurve, as_curve
from .errors import BreakpointError, ConfigError, DomainError
from .quadrature import composite_nodes, gauss_legendre, integrate

RateCurve = Curve

FACTOR_TOL = 1e-10
ANSATZ_TOL = 1e-9
LEIBNIZ_TOL = 1e-8


def _check_span(t, T):
    if t > T:
        raise DomainError(f"t={t} exceeds horizon T={T}")
    if t < 0:
        raise DomainError(f"t={t} is negative")


def constant_rate_factor(rate, tau):
    """(1 - exp(-rate tau)) / rate, tau when rate = 0."""
    tau = np.asarray(tau, dtype=float)
    if rate == 0.0:
        return tau if tau.ndim else float(tau)
    out = -np.expm1(-rate * tau) / rate
    return out if tau.ndim else float(out)


def annuity_factor(f, t, T, tol=FACTOR_TOL):
    """B_f(t) = int_t^T exp(-int_t^u f(s) ds) du."""
    f = as_curve(f)
    t, T = float(t), float(T)
    _check_span(t, T)
    if t == T:
        return 0.0
    if f.is_constant:
        return constant_rate_factor(float(f(t)), T - t)
    f_t = f.antiderivative(t)

    def integrand(u):
        return np.exp(-(f.antiderivative(u) - f_t))

    return integrate(integrand, t, T, f.breakpoints, tol=tol)


def factor_table(f, times, T, max_panel=None, order=8):
    """B_f and the cumulative rate integral on a sorted time grid.

    Returns ``(B, F)`` where ``B[k] = B_f(times[k])`` and
    ``F[k] = int_0^{times[k]} f``. Uses the backward recursion
    ``B(t_k) = int_{t_k}^{t_{k+1}} e^{-int_{t_k}^u f} du + e^{-int_{t_k}^{t_{k+1}} f} B(t_{k+1})``
    on Gauss-Legendre panels split at the curve's breakpoints.
    """
    f = as_curve(f)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise DomainError("times must be a non-empty 1-d array")
    if np.any(np.diff(times) < 0):
        raise DomainError("times must be sorted")
    if times[-1] > T * (1 + 1e-14) or times[0] < 0:
        raise DomainError("times must lie in [0, T]")
    if max_panel is None:
        max_panel = min(0.25, T / 64.0)
    bps = [b for b in f.breakpoints if times[0] < b < T]
    edges = np.unique(np.concatenate((times, [T], bps)))
    # refine long panels
    gaps = np.diff(edges)
    pieces = np.maximum(1, np.ceil(gaps / max_panel).astype(int))
    if np.any(pieces > 1):
        fine = [np.linspace(a, b, m + 1)[:-1] for a, b, m in zip(edges[:-1], edges[1:], pieces)]
        edges = np.concatenate(fine + [edges[-1:]])
    nodes, weights = composite_nodes(edges, order)
    left = edges[:-1, None]
    if isinstance(f, FunctionCurve):
        # nested Gauss-Legendre for the running integral within each panel
        x, w = gauss_legendre(order)
        half = 0.5 * (nodes - left)
        inner = left[..., None] + half[..., None] * (1.0 + x)
        run = np.sum(half[..., None] * w * f(inner), axis=-1)
        panel_int = np.sum(weights * f(nodes), axis=1)
        f_edges = np.concatenate(([f.antiderivative(edges[0])], f.antiderivative(edges[0]) + np.cumsum(panel_int)))
    else:
        f_edges = np.asarray(f.antiderivative(edges), dtype=float)
        run = np.asarray(f.antiderivative(nodes), dtype=float) - f_edges[:-1, None]
        panel_int = np.diff(f_edges)
    pieces_B = np.sum(weights * np.exp(-run), axis=1)
    disc = np.exp(-panel_int)
    B = np.empty(edges.size)
    B[-1] = 0.0
    for k in range(edges.size - 2, -1, -1):
        B[k] = pieces_B[k] + disc[k] * B[k + 1]
    idx = np.searchsorted(edges, times)
    return B[idx], f_edges[idx]


def factor_ode_residual(f, t, T, step=1e-4):
    """Finite-difference dB_f/dt minus (f(t) B_f(t) - 1).

    Central differences where the stencil fits inside [0, T]; second-order
    one-sided stencils at either end.
    """
    f = as_curve(f)
    t, T = float(t), float(T)
    _check_span(t, T)
    if not t < T:
        raise DomainError("residual needs t < T")
    for bp in f.discontinuities:
        if abs(t - bp) <= 2 * step:
            raise BreakpointError(f"t={t} is within {2 * step} of the breakpoint {bp}")

    def B(s):
        return annuity_factor(f, s, T, tol=1e-14)

    h = step
    if t - h >= 0 and t + h <= T:
        deriv = (B(t + h) - B(t - h)) / (2 * h)
    elif t + 2 * h <= T:
        deriv = (-3 * B(t) + 4 * B(t + h) - B(t + 2 * h)) / (2 * h)
    else:
        deriv = (3 * B(t) - 4 * B(t - h) + B(t - 2 * h)) / (2 * h)
    return deriv - (f(t) * B(t) - 1.0)


# --------------------------------------------------------------------------
# ansatz a(t, r) = B_{r g(t, .) + h(t, .)}(t)


@dataclass(frozen=True, eq=False)
class AnnuityAnsatz:
    """Weight ``g(t, s)`` and rate ``h(t, s)`` defining a(t, r).

    ``dg_dt`` and ``dh_dt`` are the partial derivatives in the first
    argument; when omitted they are taken by central differences.
    """

    g: object
    h: object
    dg_dt: object = None
    dh_dt: object = None
    fd_step: float = 1e-5

    def d_g(self, t, s):
        if self.dg_dt is not None:
            return self.dg_dt(t, s)
        e = self.fd_step
        return (np.asarray(self.g(t + e, s)) - np.asarray(self.g(t - e, s))) / (2 * e)

    def d_h(self, t, s):
        if self.dh_dt is not None:
            return self.dh_dt(t, s)
        e = self.fd_step
        return (np.asarray(self.h(t + e, s)) - np.asarray(self.h(t - e, s))) / (2 * e)

    def check_diagonal(self, T, points=101, tol=1e-12):
        """Verify g(t, t) = 1 on an even grid over [0, T]."""
        ts = np.linspace(0.0, T, points)
        err = np.max(np.abs(np.asarray(self.g(ts, ts), dtype=float) - 1.0))
        if err > tol:
            raise ConfigError(f"ansatz weight violates g(t, t) = 1 by {err:.3e}")
        return err


def _broadcast(fn, t, s):
    return np.broadcast_to(np.asarray(fn(t, s), dtype=float), np.shape(s))


def constant_loading_ansatz(h_curve):
    """g = 1 and h(t, s) = h_curve(s): reduces a(t, r) to B_{r + h}."""
    h_curve = as_curve(h_curve)
    return AnnuityAnsatz(
        g=lambda t, s: np.ones_like(np.asarray(s, dtype=float)),
        h=lambda t, s: np.asarray(h_curve(s), dtype=float) * np.ones_like(np.asarray(t, dtype=float)),
        dg_dt=lambda t, s: np.zeros_like(np.asarray(s, dtype=float)),
        dh_dt=lambda t, s: np.zeros_like(np.asarray(s, dtype=float)),
    )


def _avg_loading(kappa, x):
    x = np.asarray(x, dtype=float)
    kx = kappa * x
    small = np.abs(kx) < 1e-6
    safe = np.where(small, 1.0, kx)
    return np.where(small, 1.0 - kx / 2.0 + kx * kx / 6.0, -np.expm1(-safe) / safe)


def _avg_loading_dx(kappa, x):
    x = np.asarray(x, dtype=float)
    kx = kappa * x
    small = np.abs(kx) < 1e-4
    safe = np.where(small, 1.0, x)
    e = np.exp(-kappa * safe)
    full = (kappa * safe * e - 1.0 + e) / (kappa * safe * safe)
    series = -kappa / 2.0 + kappa * kx / 3.0 - kappa * kx * kx / 8.0
    return np.where(small, series, full)


def average_loading_ansatz(kappa, h=0.0, dh_dt=None):
    """g(t, s) = (1 - e^{-kappa (s - t)}) / (kappa (s - t)), g(t, t) = 1."""
    h_fn = h if callable(h) else (lambda t, s, c=float(h): np.full(np.shape(s), c))
    if dh_dt is None and not callable(h):
        dh_dt = lambda t, s: np.zeros(np.shape(s))
    return AnnuityAnsatz(
        g=lambda t, s: _avg_loading(kappa, np.asarray(s) - np.asarray(t)),
        h=h_fn,
        dg_dt=lambda t, s: -_avg_loading_dx(kappa, np.asarray(s) - np.asarray(t)),
        dh_dt=dh_dt,
    )


def exponential_loading_ansatz(kappa, h=0.0, dh_dt=None):
    """g(t, s) = e^{-kappa (s - t)}: the loading of conditional rate expectations."""
    h_fn = h if callable(h) else (lambda t, s, c=float(h): np.full(np.shape(s), c))
    if dh_dt is None and not callable(h):
        dh_dt = lambda t, s: np.zeros(np.shape(s))
    return AnnuityAnsatz(
        g=lambda t, s: np.exp(-kappa * (np.asarray(s) - np.asarray(t))),
        h=h_fn,
        dg_dt=lambda t, s: kappa * np.exp(-kappa * (np.asarray(s) - np.asarray(t))),
        dh_dt=dh_dt,
    )


def _nested(phi, psis, t, T, panels, order):
    """Nested panel quadrature.

    Returns ``[int_t^T e^{-I(u)} du] + [int_t^T e^{-I(u)} J_k(u) du for psi_k]``
    with ``I(u) = int_t^u phi`` and ``J_k(u) = int_t^u psi_k``.
    """
    edges = np.linspace(t, T, panels + 1)
    nodes, weights = composite_nodes(edges, order)
    x, w = gauss_legendre(order)
    left = edges[:-1, None]
    half = 0.5 * (nodes - left)
    inner = left[..., None] + half[..., None] * (1.0 + x)
    fns = [phi, *psis]
    out_terms = []
    running = []
    for fn in fns:
        panel_total = np.sum(weights * _broadcast(fn, t, nodes), axis=1)
        before = np.concatenate(([0.0], np.cumsum(panel_total)[:-1]))
        partial = np.sum(half[..., None] * w * _broadcast(fn, t, inner), axis=-1)
        running.append(before[:, None] + partial)
    disc = np.exp(-running[0])
    out_terms.append(float(np.sum(weights * disc)))
    for J in running[1:]:
        out_terms.append(float(np.sum(weights * disc * J)))
    return out_terms


def _adaptive_nested(phi, psis, t, T, tol, order=8):
    panels = 2
    prev = _nested(phi, psis, t, T, panels, order)
    while True:
        panels *= 2
        cur = _nested(phi, psis, t, T, panels, order)
        if max(abs(a - b) for a, b in zip(cur, prev)) <= tol or panels >= 4096:
            return cur
        prev = cur


def ansatz_surface(ansatz, t, r, T, tol=ANSATZ_TOL):
    """a(t, r) = int_t^T exp(-int_t^u (r g(t, s) + h(t, s)) ds) du."""
    t, T = float(t), float(T)
    _check_span(t, T)
    if t == T:
        return 0.0

    def phi(tt, s):
        return r * np.asarray(ansatz.g(tt, s), dtype=float) + np.asarray(ansatz.h(tt, s), dtype=float)

    return _adaptive_nested(phi, [], t, T, 0.01 * tol)[0]


def leibniz_terms(ansatz, t, r, T, tol=LEIBNIZ_TOL):
    """(H1, H2): discounted inner integrals of r dg/dt and dh/dt."""
    t, T = float(t), float(T)
    _check_span(t, T)
    if t == T:
        return 0.0, 0.0

    def phi(tt, s):
        return r * np.asarray(ansatz.g(tt, s), dtype=float) + np.asarray(ansatz.h(tt, s), dtype=float)

    def psi1(tt, s):
        return r * np.asarray(ansatz.d_g(tt, s), dtype=float)

    def psi2(tt, s):
        return np.asarray(ansatz.d_h(tt, s), dtype=float)

    _, h1, h2 = _adaptive_nested(phi, [psi1, psi2], t, T, 0.01 * tol)
    return h1, h2


def dadt_identity_check(ansatz, t, r, T, step=1e-3):
    """Finite-difference da/dt minus ``(r + h(t, t)) a - 1 - H1 - H2``."""
    t, T = float(t), float(T)
    _check_span(t, T)
    if not t < T:
        raise DomainError("identity check needs t < T")

    def a(s):
        return ansatz_surface(ansatz, s, r, T, tol=1e-12)

    h = step
    if t - h >= 0 and t + h <= T:
        deriv = (a(t + h) - a(t - h)) / (2 * h)
    elif t + h > T and t - 2 * h >= 0:
        deriv = (3 * a(t) - 4 * a(t - h) + a(t - 2 * h)) / (2 * h)
    else:
        deriv = (-3 * a(t) + 4 * a(t + h) - a(t + 2 * h)) / (2 * h)
    h1, h2 = leibniz_terms(ansatz, t, r, T, tol=1e-11)
    h_tt = float(np.asarray(ansatz.h(t, t), dtype=float))
    return deriv - ((r + h_tt) * a(t) - 1.0 - h1 - h2)

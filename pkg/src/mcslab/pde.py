"""Finite-difference solvers for wealth-to-consumption surfaces a(t, r).

Both solvers march backward from ``a(T, .) = 0`` on a uniform (t, r) grid
with theta-scheme time stepping (Crank-Nicolson by default) and central
differences in r. At the two artificial r-boundaries the equation itself
is imposed with second-order one-sided stencils; each boundary row is
condensed together with its two neighbours so that every step is a single
tridiagonal solve.

``solve_annuity_pde`` is the linear pricing equation of the annuity
certain. ``solve_mcs_pde`` is the semilinear equation whose solution makes
``c = X / a(t, r)`` a martingale; its ``a_r^2 / a`` term is handled by
Picard iteration on the duration ``D_a = -a_r / a``.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, InvalidGridError, NonlinearIterationError, PositivityLossError
from .quadrature import composite_nodes
from .strategies import GridWeight, InvestmentStrategy

PICARD_TOL = 1e-10
PICARD_MAX = 50
TERMINAL_FINE_STEPS = 1
TERMINAL_SUBSTEPS = 2


@dataclass(frozen=True)
class Grid2D:
    """Uniform grid: ``n_t`` times on [0, T] and ``n_r`` rates on [r_min, r_max]."""

    T: float
    n_t: int
    n_r: int
    r_min: float
    r_max: float

    def __post_init__(self):
        if self.n_t < 3 or self.n_r < 7:
            raise InvalidGridError("need at least 3 time nodes and 7 rate nodes")
        if not self.r_min < self.r_max:
            raise InvalidGridError(f"degenerate rate range [{self.r_min}, {self.r_max}]")
        if not self.T > 0:
            raise InvalidGridError("horizon must be positive")

    @classmethod
    def for_market(cls, market, n_t=401, n_r=401, width=6.0, min_half_width=1e-4):
        """Rates ``r0 +- width`` stationary deviations (widened to cover theta)."""
        half = max(width * market.stationary_std(), min_half_width)
        lo = min(market.r0, market.theta) if market.kappa > 0 else market.r0
        hi = max(market.r0, market.theta) if market.kappa > 0 else market.r0
        return cls(market.T, n_t, n_r, lo - half, hi + half)

    def refined(self, factor=2):
        """Grid with every interval split ``factor`` times in both directions."""
        return Grid2D(self.T, (self.n_t - 1) * factor + 1, (self.n_r - 1) * factor + 1, self.r_min, self.r_max)

    @property
    def t_nodes(self):
        return np.linspace(0.0, self.T, self.n_t)

    @property
    def r_nodes(self):
        return np.linspace(self.r_min, self.r_max, self.n_r)

    @property
    def dt(self):
        return self.T / (self.n_t - 1)

    @property
    def dr(self):
        return (self.r_max - self.r_min) / (self.n_r - 1)


@dataclass(frozen=True, eq=False)
class FactorSurface:
    """Values ``a[i, j] = a(t_i, r_j)``; ``provenance`` says how they were made.

    Off-node values come from bilinear interpolation of ``q = a / (T - t)``,
    which is smooth up to the horizon where ``q(T, r) = 1``.
    """

    t_nodes: np.ndarray
    r_nodes: np.ndarray
    values: np.ndarray
    provenance: str = "pde"
    picard_iterations: np.ndarray = None

    @property
    def T(self):
        return float(self.t_nodes[-1])

    def q_table(self):
        tau = self.T - self.t_nodes
        q = np.ones_like(self.values)
        q[:-1] = self.values[:-1] / tau[:-1, None]
        return q

    def _interp(self, tab, t, r):
        from .simulator import _bilinear

        t = np.asarray(t, dtype=float)
        r = np.asarray(r, dtype=float)
        if t.ndim == 0:
            return _bilinear(tab, self.t_nodes, self.r_nodes, float(t), r)
        t, r = np.broadcast_arrays(t, r)
        out = np.empty(t.shape)
        for tv in np.unique(t):
            sel = t == tv
            out[sel] = _bilinear(tab, self.t_nodes, self.r_nodes, float(tv), r[sel])
        return out

    def __call__(self, t, r):
        out = (self.T - np.asarray(t, dtype=float)) * self._interp(self.q_table(), t, r)
        return float(out) if np.ndim(out) == 0 else out

    def duration_table(self):
        """``D_a = -a_r / a = -q_r / q`` on the nodes (second-order differences)."""
        q = self.q_table()
        return -np.gradient(q, self.r_nodes, axis=1, edge_order=2) / q

    def duration(self, t, r):
        out = self._interp(self.duration_table(), t, r)
        return float(out) if np.ndim(out) == 0 else out

    def rows(self):
        tt, rr = np.meshgrid(self.t_nodes, self.r_nodes, indexing="ij")
        return np.column_stack([tt.ravel(), rr.ravel(), self.values.ravel()])


# --------------------------------------------------------------------------
# discretisation


@dataclass
class _Operator:
    """Discrete ``L a = b a_r + s a_rr - k a`` with 4-point boundary rows."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    top: np.ndarray
    bottom: np.ndarray

    def apply(self, a):
        out = self.diag * a
        out[1:-1] += self.lower[1:-1] * a[:-2] + self.upper[1:-1] * a[2:]
        out[0] = self.top @ a[:4]
        out[-1] = self.bottom @ a[-4:][::-1]
        return out


def _operator(b, s, k, h):
    lower = s / h**2 - b / (2 * h)
    diag = -2 * s / h**2 - k
    upper = s / h**2 + b / (2 * h)
    top = b[0] * np.array([-3.0, 4.0, -1.0, 0.0]) / (2 * h) + s[0] * np.array([2.0, -5.0, 4.0, -1.0]) / h**2
    top[0] -= k[0]
    bottom = b[-1] * np.array([3.0, -4.0, 1.0, 0.0]) / (2 * h) + s[-1] * np.array([2.0, -5.0, 4.0, -1.0]) / h**2
    bottom[0] -= k[-1]
    diag = diag.copy()
    diag[0], diag[-1] = top[0], bottom[0]
    return _Operator(lower, diag, upper, top, bottom)


def _condense(rows, rhs):
    """Reduce three boundary rows on four unknowns to one row on the last two.

    ``rows`` is 3 x 4 (unknowns ordered from the boundary inward). The
    combination ``y`` annihilating the first two columns is their cross
    product, so no pivot is ever taken from a small off-diagonal entry.
    """
    y = np.cross(rows[:, 0], rows[:, 1])
    y /= np.linalg.norm(y)
    return y @ rows[:, 2], y @ rows[:, 3], y @ rhs


def _back_substitute(rows, rhs, far):
    """Boundary unknowns (x0, x1) from the 3 x 4 block given (x2, x3) = ``far``."""
    sol, *_ = np.linalg.lstsq(rows[:, :2], rhs - rows[:, 2:] @ far, rcond=None)
    return sol


def _implicit_solve(op, c, rhs):
    """Solve ``(I - c L) a = rhs``.

    The boundary blocks are condensed so the interior is a single
    tridiagonal solve.
    """
    n = rhs.size
    lower = -c * op.lower
    diag = 1.0 - c * op.diag
    upper = -c * op.upper
    top = np.zeros((3, 4))
    top[0] = -c * op.top
    top[0, 0] += 1.0
    top[1, :3] = lower[1], diag[1], upper[1]
    top[2, 1:] = lower[2], diag[2], upper[2]
    bot = np.zeros((3, 4))
    bot[0] = -c * op.bottom
    bot[0, 0] += 1.0
    bot[1, :3] = upper[-2], diag[-2], lower[-2]
    bot[2, 1:] = upper[-3], diag[-3], lower[-3]
    rhs_top = rhs[:3].copy()
    rhs_bot = rhs[::-1][:3].copy()
    lo = lower[2:-2].copy()
    di = diag[2:-2].copy()
    up = upper[2:-2].copy()
    b = rhs[2:-2].copy()
    di[0], up[0], b[0] = _condense(top, rhs_top)
    lo[0] = 0.0
    di[-1], lo[-1], b[-1] = _condense(bot, rhs_bot)
    up[-1] = 0.0
    out = np.empty(n)
    out[2:-2] = kernels.thomas(lo, di, up, b)
    out[:2] = _back_substitute(top, rhs_top, out[2:4])
    out[-2:] = _back_substitute(bot, rhs_bot, out[-3:-5:-1])[::-1]
    return out


def _r_derivative(a, h):
    return np.gradient(a, h, edge_order=2)


def _march(grid, coeffs, nonlinear, theta, rannacher, tol, max_iter, seed=None,
           fine_steps=TERMINAL_FINE_STEPS, substeps=TERMINAL_SUBSTEPS):
    """Backward theta-scheme. ``coeffs(j, D)`` returns (b, s, k) at level j.

    The first ``fine_steps`` intervals below the horizon are each crossed
    in ``substeps`` equal sub-steps, with coefficients interpolated
    linearly in time. The solution is O(T - t) there, so the local error
    of a coarse step is large relative to it; the finer start keeps the
    relative accuracy of the terminal layer in line with the interior.
    """
    t = grid.t_nodes
    h, dt = grid.dr, grid.dt
    n_t, n_r = grid.n_t, grid.n_r
    a = np.zeros((n_t, n_r))
    iters = np.zeros(n_t, dtype=int)
    D_next = np.zeros(n_r)
    source = np.ones(n_r)

    def blended(j, frac, D):
        # coefficients at t_j + frac * dt
        lo = coeffs(j, D)
        if frac == 0.0:
            return lo
        hi = coeffs(j + 1, D)
        return tuple((1.0 - frac) * x + frac * y for x, y in zip(lo, hi))

    count = 0
    for step, j in enumerate(range(n_t - 2, -1, -1)):
        m = substeps if step < fine_steps else 1
        sub = dt / m
        cur_a = a[j + 1]
        total_iters = 0
        for i in range(m - 1, -1, -1):
            frac_hi, frac_lo = (i + 1) / m, i / m
            th = 1.0 if count < rannacher else theta
            b1, s1, k1 = blended(j, frac_hi, D_next)
            rhs = cur_a + (1.0 - th) * sub * _operator(b1, s1, k1, h).apply(cur_a) + sub * source
            if count == 0 and seed is not None:
                guess = seed(j, sub)
            else:
                guess = cur_a + sub
            if not nonlinear:
                b0, s0, k0 = blended(j, frac_lo, None)
                new = _implicit_solve(_operator(b0, s0, k0, h), th * sub, rhs)
                total_iters += 1
            else:
                cur = guess
                for it in range(1, max_iter + 1):
                    D = -_r_derivative(cur, h) / cur
                    b0, s0, k0 = blended(j, frac_lo, D)
                    new = _implicit_solve(_operator(b0, s0, k0, h), th * sub, rhs)
                    diff = float(np.max(np.abs(new - cur)))
                    cur = new
                    if diff <= tol * max(1.0, float(np.max(np.abs(new)))):
                        break
                else:
                    raise NonlinearIterationError(j, diff, float(t[j]))
                total_iters += it
            if not np.all(np.isfinite(new)) or np.any(new <= 0):
                raise PositivityLossError(j, float(t[j]), new.tolist())
            cur_a = new
            if nonlinear:
                D_next = -_r_derivative(new, h) / new
            count += 1
        a[j] = cur_a
        iters[j] = total_iters
    return a, iters


def _check_grid(market, grid):
    if abs(grid.T - market.T) > 1e-12 * market.T:
        raise InvalidGridError(f"grid horizon {grid.T} differs from the market horizon {market.T}")


def exposure_tables(market, pi, grid):
    """(e1, e2) on the grid: rate exposure ``pi1 s11 + pi2 s21`` and ``pi2 s22``."""
    if pi.regime != "rate":
        raise ConfigError("the short-rate market needs a (t, r) strategy")
    tt, rr = np.meshgrid(grid.t_nodes, grid.r_nodes, indexing="ij")
    e1, e2 = pi.exposures(market, tt, rr)
    return np.broadcast_to(e1, tt.shape).astype(float), np.broadcast_to(e2, tt.shape).astype(float)


def solve_annuity_pde(market, grid, theta=0.5, rannacher=0):
    """Annuity-certain surface: ``0 = a_t + 1 - r a + a_r (mu + lambda1 sigma_r) + a_rr sigma_r^2 / 2``."""
    _check_grid(market, grid)
    r = grid.r_nodes
    t = grid.t_nodes
    s = np.full(r.size, 0.5 * market.sigma_r**2)

    def coeffs(j, _D):
        return market.mu_q(t[j], r), s, r

    a, iters = _march(grid, coeffs, False, theta, rannacher, PICARD_TOL, PICARD_MAX)
    return FactorSurface(t, r, a, "pde-annuity", iters)


def solve_mcs_pde(market, pi, grid, theta=0.5, rannacher=0, tol=PICARD_TOL, max_iter=PICARD_MAX):
    """Martingale-consumption surface for strategy ``pi``.

    Solves ``0 = a_t + mu a_r + sigma_r^2/2 a_rr + 1 - a_r (sigma_r e1 + sigma_r^2 a_r / a) - k a``
    with ``e1 = pi1 s11 + pi2 s21`` and
    ``k = r + e1 lambda1 + pi2 s22 lambda2``, ``a(T, .) = 0``. The duration
    in the convection term is lagged and Picard-iterated to ``tol`` per
    step; it vanishes at the horizon, and the first step is seeded with
    ``a = dt - k dt^2 / 2``.
    """
    _check_grid(market, grid)
    r = grid.r_nodes
    t = grid.t_nodes
    e1, e2 = exposure_tables(market, pi, grid)
    s = np.full(r.size, 0.5 * market.sigma_r**2)
    sr = market.sigma_r

    def coeffs(j, D):
        k = r + e1[j] * market.lambda1 + e2[j] * market.lambda2
        b = market.mu(t[j], r) - sr * e1[j]
        if D is not None:
            b = b + sr * sr * D
        return b, s, k

    def seed(j, dt):
        k = r + e1[j] * market.lambda1 + e2[j] * market.lambda2
        return dt - k * dt * dt / 2

    a, iters = _march(grid, coeffs, sr != 0.0, theta, rannacher, tol, max_iter, seed)
    return FactorSurface(t, r, a, "pde", iters)


# --------------------------------------------------------------------------
# closed forms and derived quantities


def vasicek_bond_price(market, tau, r):
    """Zero-coupon price under the short-rate drift ``mu + lambda1 sigma_r``."""
    tau = np.asarray(tau, dtype=float)
    r = np.asarray(r, dtype=float)
    k, s, l1 = market.kappa, market.sigma_r, market.lambda1
    if k == 0.0:
        A = -l1 * s * tau**2 / 2 + s * s * tau**3 / 6
        return np.exp(A - tau * r)
    B = -np.expm1(-k * tau) / k
    A = (market.theta_q - s * s / (2 * k * k)) * (B - tau) - s * s * B * B / (4 * k)
    return np.exp(A - B * r)


def vasicek_annuity_closed_form(market, t, r, panels=64, order=16):
    """``abar(t, r) = int_0^{T-t} P(tau, r) dtau``, by composite Gauss-Legendre.

    ``t`` and ``r`` broadcast; the integrand is smooth so a fixed rule is
    accurate to rounding.
    """
    t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
    out = np.empty(t.shape)
    for tv in np.unique(t):
        sel = t == tv
        span = market.T - tv
        if span <= 0:
            out[sel] = 0.0
            continue
        nodes, weights = composite_nodes(np.linspace(0.0, span, panels + 1), order)
        P = vasicek_bond_price(market, nodes.ravel()[:, None], r[sel][None, :])
        out[sel] = weights.ravel() @ P
    return out


def closed_form_surface(market, grid):
    tt, rr = np.meshgrid(grid.t_nodes, grid.r_nodes, indexing="ij")
    return FactorSurface(grid.t_nodes, grid.r_nodes, vasicek_annuity_closed_form(market, tt, rr), "closed-form-annuity")


def hedge_strategy(market, surface):
    """Bond-only strategy replicating the annuity: ``pi1 = D_abar sigma_r / s11``, ``pi2 = 0``.

    At the horizon, where a zero-coupon ``s11`` vanishes with the duration,
    ``pi1`` is extrapolated linearly from the two preceding time rows.
    """
    t, r = surface.t_nodes, surface.r_nodes
    market.check_spanning(t, r)
    tt, rr = np.meshgrid(t, r, indexing="ij")
    s11 = np.broadcast_to(np.asarray(market.sigma11(tt, rr), dtype=float), tt.shape)
    D = surface.duration_table()
    pi1 = np.empty_like(D)
    live = tt < market.T
    pi1[live] = D[live] * market.sigma_r / s11[live]
    last = ~live[:, 0]
    if np.any(last):
        if s11[-1].any():
            pi1[-1] = D[-1] * market.sigma_r / np.where(s11[-1] != 0, s11[-1], 1.0)
        if not np.all(s11[-1] != 0):
            pi1[-1] = 2 * pi1[-2] - pi1[-3]
    return InvestmentStrategy((GridWeight(t, r, pi1), 0.0), regime="rate")


def alpha_c_table(surface, market, pi):
    """Consumption drift ``alpha_c`` at interior nodes from finite differences.

    ``alpha_c = k - (a_t + mu a_r + sigma_r^2/2 a_rr - sigma_r e1 a_r - sigma_r^2 a_r^2 / a + 1) / a``;
    it vanishes where the surface solves the martingale equation. The
    derivatives are central differences of ``q = a / (T - t)``, which is
    smooth at the horizon; with ``a = (T - t) q`` the bracket divided by
    ``a`` becomes
    ``((1 - q) / (T - t) + q_t + mu q_r + sigma_r^2/2 q_rr - sigma_r e1 q_r - sigma_r^2 q_r^2 / q) / q``.
    Returns an array of shape (n_t - 2, n_r - 2).
    """
    t, r = surface.t_nodes, surface.r_nodes
    q = surface.q_table()
    dt, h = t[1] - t[0], r[1] - r[0]
    grid = Grid2D(surface.T, t.size, r.size, r[0], r[-1])
    e1, e2 = exposure_tables(market, pi, grid)
    sr = market.sigma_r
    qi = q[1:-1, 1:-1]
    q_t = (q[2:, 1:-1] - q[:-2, 1:-1]) / (2 * dt)
    q_r = (q[1:-1, 2:] - q[1:-1, :-2]) / (2 * h)
    q_rr = (q[1:-1, 2:] - 2 * qi + q[1:-1, :-2]) / h**2
    ri = r[None, 1:-1]
    ti = t[1:-1, None]
    tau = surface.T - ti
    e1i, e2i = e1[1:-1, 1:-1], e2[1:-1, 1:-1]
    k = ri + e1i * market.lambda1 + e2i * market.lambda2
    mu = market.mu(ti, ri)
    gen = (1.0 - qi) / tau + q_t + mu * q_r + 0.5 * sr * sr * q_rr - sr * e1i * q_r - sr * sr * q_r * q_r / qi
    return k - gen / qi


def alpha_c_residual(surface, market, pi, t, r):
    """``alpha_c`` at the interior node nearest to (t, r)."""
    tab = alpha_c_table(surface, market, pi)
    i = int(np.clip(np.rint((t - surface.t_nodes[0]) / (surface.t_nodes[1] - surface.t_nodes[0])), 1, surface.t_nodes.size - 2))
    j = int(np.clip(np.rint((r - surface.r_nodes[0]) / (surface.r_nodes[1] - surface.r_nodes[0])), 1, surface.r_nodes.size - 2))
    return float(tab[i - 1, j - 1])


def simplified_pde_residual(ansatz, market, pi, t, r, dr=1e-3, tol=1e-13):
    """Residual of the martingale equation after substituting ``a = B_{r g + h}``.

    ``-H1 - H2 + a_r (mu - sigma_r e1 + sigma_r^2 D_a) + sigma_r^2/2 a_rr - a (e1 lambda1 + e2 lambda2 - h(t, t))``
    with r-derivatives by central differences of step ``dr``.
    """
    from .annuity import ansatz_surface, leibniz_terms

    T = market.T
    a0 = ansatz_surface(ansatz, t, r, T, tol=tol)
    ap = ansatz_surface(ansatz, t, r + dr, T, tol=tol)
    am = ansatz_surface(ansatz, t, r - dr, T, tol=tol)
    a_r = (ap - am) / (2 * dr)
    a_rr = (ap - 2 * a0 + am) / dr**2
    h1, h2 = leibniz_terms(ansatz, t, r, T, tol=1e-11)
    e1, e2 = pi.exposures(market, t, r)
    sr = market.sigma_r
    d_a = -a_r / a0 if a0 > 0 else 0.0
    h_tt = float(np.asarray(ansatz.h(t, t), dtype=float))
    conv = market.mu(t, r) - sr * e1 + sr * sr * d_a
    return float(-h1 - h2 + a_r * conv + 0.5 * sr * sr * a_rr - a0 * (e1 * market.lambda1 + e2 * market.lambda2 - h_tt))


# --------------------------------------------------------------------------
# refinement studies


@dataclass(frozen=True)
class ConvergenceRow:
    n_t: int
    n_r: int
    max_rel_error: float
    ratio: float


def _max_rel_error(surface, market):
    live = surface.t_nodes < market.T
    exact = vasicek_annuity_closed_form(market, surface.t_nodes[live][:, None], surface.r_nodes[None, :])
    return float(np.max(np.abs(surface.values[live] - exact) / exact))


def convergence_study(market, base, levels=4, mode="annuity", **kw):
    """Max relative error against the closed-form annuity on doubling grids.

    ``mode="annuity"`` solves the linear equation; ``mode="hedge"`` solves
    the martingale equation under the hedge strategy derived from the
    linear solution on the same grid.
    """
    rows, grid, prev = [], base, None
    for _ in range(levels):
        abar = solve_annuity_pde(market, grid, **kw)
        if mode == "annuity":
            surf = abar
        elif mode == "hedge":
            surf = solve_mcs_pde(market, hedge_strategy(market, abar), grid, **kw)
        else:
            raise ConfigError(f"unknown convergence mode {mode!r}")
        err = _max_rel_error(surf, market)
        rows.append(ConvergenceRow(grid.n_t, grid.n_r, err, prev / err if prev else float("nan")))
        prev = err
        grid = grid.refined()
    return rows


def self_convergence_study(market, pi, base, levels=4, **kw):
    """Refinement table without a closed form.

    Row ``i`` holds the max relative difference between the solutions on
    levels ``i - 1`` and ``i`` at the coarse nodes; for a second-order
    scheme consecutive differences shrink by about four. The first row
    has no difference (NaN).
    """
    rows, grid, prev_surf, prev_diff = [], base, None, None
    for _ in range(levels):
        surf = solve_mcs_pde(market, pi, grid, **kw)
        if prev_surf is None:
            diff, ratio = float("nan"), float("nan")
        else:
            fine = surf.values[::2, ::2][:-1]
            coarse = prev_surf.values[:-1]
            diff = float(np.max(np.abs(fine - coarse) / coarse))
            ratio = prev_diff / diff if prev_diff is not None else float("nan")
            prev_diff = diff
        rows.append(ConvergenceRow(grid.n_t, grid.n_r, diff, ratio))
        prev_surf = surf
        grid = grid.refined()
    return rows

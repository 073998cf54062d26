"""Monte Carlo simulation of wealth and consumption under factor-form rules.

With ``c = X / Z`` wealth has the closed form
``X(t) = x0 Y(t) exp(-int_0^t 1/Z)`` where ``Y`` is the value of one unit
invested in the strategy without consumption. The default
``exact-lognormal`` scheme advances ``log Y`` exactly over each step with
coefficients frozen at the left endpoint and integrates the drain
``D = int 1/Z`` in closed form:

* deterministic factors ``B_f``: ``D(t) = int_0^t f - log(B_f(t) / B_f(0))``;
* surfaces ``a(t, r) = (T - t) q(t, r)``: the ``1 / (T - t)`` singularity
  exactly, the smooth remainder by the trapezoid rule along the path.

The ``euler`` scheme steps the wealth SDE directly and is kept for
cross-validation. Paths run to ``T - dt``; consumption at ``T`` is reported
as that last value.

Random numbers come from one Philox stream per batch keyed by
``(master_seed, batch_index)``. With antithetic sampling each batch draws
half its paths and mirrors them; in the bundle path ``i`` and path
``i + paths // 2`` form a pair.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._kernels_py import _cell
from .errors import ConfigError, NumericalBlowupError, RuleError
from .market import DeterministicMarket, VasicekMarket
from .strategies import DeterministicFactorRule, SurfaceRule

SCHEMES = ("exact-lognormal", "euler")
#: cap on the number of doubles in one noise block
BLOCK_ELEMENTS = 1 << 21
KEEP_NOISE_LIMIT = 50_000_000


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    ``report_times`` defaults to ten times ``j T / 10`` (j = 1..9) plus the
    terminal sample ``T - dt``; a report time equal to ``T`` means that
    terminal sample. ``vol_window`` > 0 records squared log-consumption
    increments over that many steps after each report time.
    """

    x0: float = 1.0
    steps: int = 1000
    paths: int = 10_000
    master_seed: int = 0
    scheme: str = "exact-lognormal"
    report_times: tuple = None
    antithetic: bool = True
    batch_size: int = 10_000
    vol_window: int = 0
    keep_noise: bool = False

    def __post_init__(self):
        if not self.x0 > 0:
            raise ConfigError("x0 must be positive", "simulation.x0")
        if self.steps < 2:
            raise ConfigError("steps must be at least 2", "simulation.steps")
        if self.paths < 1:
            raise ConfigError("paths must be at least 1", "simulation.paths")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}", "simulation.scheme")
        if self.antithetic and (self.paths % 2 or self.batch_size % 2):
            raise ConfigError("antithetic sampling needs even paths and batch_size", "simulation.paths")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive", "simulation.batch_size")
        if self.vol_window < 0:
            raise ConfigError("vol_window must be non-negative", "simulation.vol_window")

    def report_indices(self, T):
        last = self.steps - 1
        if self.report_times is None:
            idx = [int(round(j * self.steps / 10)) for j in range(1, 10)] + [last]
        else:
            idx = []
            for t in self.report_times:
                t = float(t)
                if abs(t - T) <= 1e-9 * T:
                    idx.append(last)
                    continue
                k = t / T * self.steps
                if abs(k - round(k)) > 1e-6 or not 0 < round(k) <= last:
                    raise ConfigError(f"report time {t} is not an interior grid point", "simulation.report_times")
                idx.append(int(round(k)))
        return np.array(sorted(set(min(max(i, 1), last) for i in idx)), dtype=np.intp)


@dataclass(frozen=True, eq=False)
class PathBundle:
    """Recorded paths. Arrays indexed ``[record, path]``.

    ``record_index`` are grid indices of the recorded times, ``report`` the
    positions within the record that belong to the report times. ``logY``
    is the log growth of the strategy, ``drain`` the integral of ``1/Z``,
    ``budget`` the per-path trapezoid value of ``int_0^{T-dt} c / (x0 Y)``.
    ``qv`` holds the squared log-consumption increments summed over each
    volatility window (rows align with ``qv_start``).
    """

    times: np.ndarray
    record_index: np.ndarray
    report: np.ndarray
    X: np.ndarray
    c: np.ndarray
    logY: np.ndarray
    drain: np.ndarray
    r: np.ndarray
    budget: np.ndarray
    qv: np.ndarray
    qv_start: np.ndarray
    qv_end: np.ndarray
    x0: float
    T: float
    dt: float
    steps: int
    antithetic: bool
    master_seed: int
    scheme: str
    n_clamped: int = 0
    noise: np.ndarray = None
    path_id: np.ndarray = field(default=None)

    @property
    def paths(self):
        return self.X.shape[1]

    @property
    def report_times(self):
        return self.times[self.report]


def _stream(master_seed, batch):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master_seed), int(batch)])))


def _batches(cfg):
    out, start = [], 0
    while start < cfg.paths:
        size = min(cfg.batch_size, cfg.paths - start)
        out.append((start, size))
        start += size
    return out


def _layout(cfg):
    """Global column of each (batch, local path) so that antithetic pairs are ``i, i + P/2``."""
    cols = []
    half_total = cfg.paths // 2
    for start, size in _batches(cfg):
        if cfg.antithetic:
            h = size // 2
            base = start // 2
            cols.append(np.concatenate((np.arange(base, base + h), half_total + np.arange(base, base + h))))
        else:
            cols.append(np.arange(start, start + size))
    return cols


def _record_plan(cfg, T):
    report = cfg.report_indices(T)
    last = cfg.steps - 1
    windows = []
    if cfg.vol_window:
        for k in report:
            if k + cfg.vol_window <= last:
                windows.append((int(k), int(k + cfg.vol_window)))
    rec = sorted({0, *report.tolist(), *(e for _, e in windows)})
    rec = np.array(rec, dtype=np.intp)
    return rec, np.searchsorted(rec, report), windows


def _draw(gen, shape, antithetic):
    """Normals of ``shape[:-1] + (paths,)``, mirrored when antithetic."""
    *lead, p = shape
    if not antithetic:
        return gen.standard_normal((*lead, p))
    h = gen.standard_normal((*lead, p // 2))
    return np.concatenate((h, -h), axis=-1)


def _check_finite(arr, t, cols):
    bad = ~np.isfinite(arr)
    if np.any(bad):
        j = int(np.argmax(bad.reshape(-1)) % arr.shape[-1])
        raise NumericalBlowupError(f"non-finite state at t={t}", path_id=int(cols[j]), t=float(t))


def simulate(market, pi, rule, cfg):
    """Simulate wealth and consumption paths; see the module docstring."""
    if isinstance(market, DeterministicMarket):
        return _simulate_deterministic(market, pi, rule, cfg)
    if isinstance(market, VasicekMarket):
        return _simulate_rate(market, pi, rule, cfg)
    raise ConfigError(f"unsupported market type {type(market).__name__}")


# --------------------------------------------------------------------------
# deterministic coefficients


def _simulate_deterministic(market, pi, rule, cfg):
    if not isinstance(rule, DeterministicFactorRule):
        raise ConfigError("deterministic markets need a rule with a deterministic factor")
    if pi.regime != "deterministic" or pi.n != market.n:
        raise ConfigError("strategy does not match the market's risky assets")
    T, steps = market.T, cfg.steps
    dt = T / steps
    grid = np.linspace(0.0, T, steps + 1)[:steps]
    left = grid[:-1]
    n = market.n
    r, _, sigma, lam = market.coefficients_on(left)
    w = pi.on(left)
    v = np.einsum("kn,knm->km", w, sigma)
    drift = r + np.einsum("km,km->k", v, lam) - 0.5 * np.einsum("km,km->k", v, v)
    mean_logy = np.concatenate(([0.0], np.cumsum(drift * dt)))
    B, F = rule.table(grid)
    if not np.all(B > 0):
        raise RuleError("factor is not positive before the horizon")
    drain = (F - F[0]) - np.log(B / B[0])
    defl = np.exp(-drain) / B
    budget = float(np.sum(0.5 * dt * (defl[1:] + defl[:-1])))

    rec, report, _ = _record_plan(cfg, T)
    R, P = rec.size, cfg.paths
    logY = np.empty((R, P))
    noise_store = None
    if cfg.keep_noise:
        if (steps - 1) * n * P > KEEP_NOISE_LIMIT:
            raise ConfigError("keep_noise would store too many draws", "simulation.keep_noise")
        noise_store = np.empty((steps - 1, n, P))
    layout = _layout(cfg)
    Xe = np.empty((R, P)) if cfg.scheme == "euler" else None
    sdt = np.sqrt(dt)
    for b, ((start, size), cols) in enumerate(zip(_batches(cfg), layout)):
        gen = _stream(cfg.master_seed, b)
        noise_part = np.zeros(size)
        x_e = np.full(size, cfg.x0)
        y_e = np.ones(size)
        logY[0, cols] = 0.0
        if Xe is not None:
            Xe[0, cols] = cfg.x0
        k = 0
        for j in range(1, R):
            target = rec[j]
            while k < target:
                m = max(1, min(target - k, BLOCK_ELEMENTS // max(1, n * size)))
                z = _draw(gen, (m, n, size), cfg.antithetic) if n else np.zeros((m, 0, size))
                if noise_store is not None:
                    noise_store[k:k + m][:, :, cols] = z
                if cfg.scheme == "exact-lognormal":
                    if n:
                        noise_part += sdt * (v[k:k + m].reshape(-1) @ z.reshape(m * n, size))
                else:
                    for i in range(m):
                        kk = k + i
                        gross = (r[kk] + v[kk] @ lam[kk]) * dt + sdt * (v[kk] @ z[i])
                        x_e = x_e + x_e * gross - x_e / B[kk] * dt
                        y_e = y_e + y_e * gross
                k += m
            if cfg.scheme == "exact-lognormal":
                logY[j, cols] = mean_logy[target] + noise_part
                _check_finite(logY[j, cols], grid[target], cols)
            else:
                _check_finite(x_e, grid[target], cols)
                if np.any(x_e <= 0) or np.any(y_e <= 0):
                    jj = int(np.argmax((x_e <= 0) | (y_e <= 0)))
                    raise NumericalBlowupError("Euler step produced non-positive wealth", int(cols[jj]), grid[target])
                Xe[j, cols] = x_e
                logY[j, cols] = np.log(y_e)
    d = np.broadcast_to(drain[rec][:, None], (R, P))
    if cfg.scheme == "exact-lognormal":
        X = cfg.x0 * np.exp(logY - d)
    else:
        X = Xe
    c = X / B[rec][:, None]
    return PathBundle(
        times=grid[rec], record_index=rec, report=report, X=X, c=c, logY=logY,
        drain=np.array(d), r=None, budget=np.full(P, budget),
        qv=None, qv_start=np.zeros(0), qv_end=np.zeros(0),
        x0=cfg.x0, T=T, dt=dt, steps=steps, antithetic=cfg.antithetic,
        master_seed=cfg.master_seed, scheme=cfg.scheme, noise=noise_store,
        path_id=np.arange(P),
    )


# --------------------------------------------------------------------------
# short-rate market


def _rate_tables(market, pi, rule):
    """(t_nodes, r_nodes, q, e1, e2) on the grid used for interpolation."""
    if pi.regime != "rate":
        raise ConfigError("the short-rate market needs a (t, r) strategy")
    if isinstance(rule, SurfaceRule):
        surf = rule.surface
        t_nodes, r_nodes, q = surf.t_nodes, surf.r_nodes, surf.q_table()
    elif isinstance(rule, DeterministicFactorRule):
        from .pde import Grid2D

        g = Grid2D.for_market(market, n_t=1001, n_r=201)
        t_nodes, r_nodes = g.t_nodes, g.r_nodes
        B, _ = rule.table(t_nodes[:-1])
        qt = np.append(B / (market.T - t_nodes[:-1]), 1.0)
        q = np.repeat(qt[:, None], r_nodes.size, axis=1)
    else:
        raise ConfigError(f"unsupported rule {type(rule).__name__}")
    if abs(t_nodes[-1] - market.T) > 1e-9 * market.T:
        raise ConfigError("surface horizon does not match the market")
    if np.any(q[:-1] <= 0) or not np.all(np.isfinite(q)):
        raise RuleError("factor surface is not positive before the horizon")
    tt, rr = np.meshgrid(t_nodes, r_nodes, indexing="ij")
    e1, e2 = pi.exposures(market, tt, rr)
    e1 = np.ascontiguousarray(np.broadcast_to(e1, tt.shape), dtype=float)
    e2 = np.ascontiguousarray(np.broadcast_to(e2, tt.shape), dtype=float)
    return t_nodes, r_nodes, np.ascontiguousarray(q, dtype=float), e1, e2


def _bilinear(tab, t_nodes, r_nodes, t, r):
    it, ft, _ = _cell(np.float64(t), t_nodes[0], t_nodes[1] - t_nodes[0], t_nodes.size)
    jr, fr, _ = _cell(r, r_nodes[0], r_nodes[1] - r_nodes[0], r_nodes.size)
    lo = (1 - fr) * tab[it, jr] + fr * tab[it, jr + 1]
    hi = (1 - fr) * tab[it + 1, jr] + fr * tab[it + 1, jr + 1]
    return (1 - ft) * lo + ft * hi


def _simulate_rate(market, pi, rule, cfg):
    T, steps = market.T, cfg.steps
    dt = T / steps
    grid = np.linspace(0.0, T, steps + 1)[:steps]
    t_nodes, r_nodes, q, e1t, e2t = _rate_tables(market, pi, rule)
    tdt, rdr = t_nodes[1] - t_nodes[0], r_nodes[1] - r_nodes[0]
    decay, sd = market.ou_transition(dt)
    rec, report, windows = _record_plan(cfg, T)
    R, P = rec.size, cfg.paths
    W = len(windows)
    window_of_step = np.full(steps - 1, -1, dtype=np.int64)
    for i, (s, e) in enumerate(windows):
        window_of_step[s:e] = i
    out = {name: np.empty((R, P)) for name in ("X", "c", "logY", "drain", "r")}
    budget = np.empty(P)
    qv = np.zeros((W, P))
    noise_store = None
    if cfg.keep_noise:
        if (steps - 1) * 2 * P > KEEP_NOISE_LIMIT:
            raise ConfigError("keep_noise would store too many draws", "simulation.keep_noise")
        noise_store = np.empty((steps - 1, 2, P))
    q0 = float(_bilinear(q, t_nodes, r_nodes, 0.0, np.array([market.r0]))[0])
    a0 = T * q0
    n_clamped = 0
    sdt = np.sqrt(dt)
    for b, ((start, size), cols) in enumerate(zip(_batches(cfg), _layout(cfg))):
        gen = _stream(cfg.master_seed, b)
        r = np.full(size, market.r0)
        logy = np.zeros(size)
        drain = np.zeros(size)
        w = np.full(size, (1.0 / q0 - 1.0) / T)
        bud = np.zeros(size)
        logc = np.full(size, -np.log(a0))
        x_e = np.full(size, cfg.x0)
        qv_b = np.zeros((W, size))

        def record(j, k):
            out["r"][j, cols] = r
            if cfg.scheme == "exact-lognormal":
                out["logY"][j, cols] = logy
                out["drain"][j, cols] = drain
                out["X"][j, cols] = cfg.x0 * np.exp(logy - drain)
                out["c"][j, cols] = cfg.x0 * np.exp(logc)
            else:
                a = (T - grid[k]) * _bilinear(q, t_nodes, r_nodes, grid[k], r)
                out["logY"][j, cols] = logy
                out["drain"][j, cols] = drain
                out["X"][j, cols] = x_e
                out["c"][j, cols] = x_e / a

        record(0, 0)
        k = 0
        for j in range(1, R):
            target = rec[j]
            while k < target:
                m = max(1, min(target - k, BLOCK_ELEMENTS // max(1, 2 * size)))
                z = _draw(gen, (m, 2, size), cfg.antithetic)
                if noise_store is not None:
                    noise_store[k:k + m][:, :, cols] = z
                z1 = np.ascontiguousarray(z[:, 0])
                z2 = np.ascontiguousarray(z[:, 1])
                if cfg.scheme == "exact-lognormal":
                    n_clamped += kernels.rate_block(
                        r, logy, drain, w, bud, logc, z1, z2, grid[k], dt, T,
                        market.theta, decay, sd, market.lambda1, market.lambda2,
                        t_nodes[0], tdt, r_nodes[0], rdr, q, e1t, e2t,
                        window_of_step[k:k + m], qv_b,
                    )
                else:
                    for i in range(m):
                        kk = k + i
                        t = grid[kk]
                        a = (T - t) * _bilinear(q, t_nodes, r_nodes, t, r)
                        e1 = _bilinear(e1t, t_nodes, r_nodes, t, r)
                        e2 = _bilinear(e2t, t_nodes, r_nodes, t, r)
                        gross = (r + e1 * market.lambda1 + e2 * market.lambda2) * dt + sdt * (e1 * z1[i] + e2 * z2[i])
                        drain += dt / a
                        x_e = x_e + x_e * gross - x_e / a * dt
                        logy += np.log1p(gross)
                        r = r + market.mu(t, r) * dt - market.sigma_r * sdt * z1[i]
                k += m
            if cfg.scheme == "euler" and (np.any(x_e <= 0) or not np.all(np.isfinite(x_e))):
                jj = int(np.argmax(~(x_e > 0)))
                raise NumericalBlowupError("Euler step produced non-positive wealth", int(cols[jj]), grid[target])
            _check_finite(logc if cfg.scheme == "exact-lognormal" else x_e, grid[target], cols)
            record(j, target)
        budget[cols] = bud
        qv[:, cols] = qv_b
    if cfg.scheme == "exact-lognormal" and (np.any(out["X"] <= 0) or np.any(out["c"] <= 0)):
        raise NumericalBlowupError("non-positive wealth or consumption before the horizon")
    return PathBundle(
        times=grid[rec], record_index=rec, report=report, X=out["X"], c=out["c"], logY=out["logY"],
        drain=out["drain"], r=out["r"], budget=budget / 1.0,
        qv=qv if W else None,
        qv_start=np.array([s for s, _ in windows], dtype=np.intp),
        qv_end=np.array([e for _, e in windows], dtype=np.intp),
        x0=cfg.x0, T=T, dt=dt, steps=steps, antithetic=cfg.antithetic,
        master_seed=cfg.master_seed, scheme=cfg.scheme, n_clamped=int(n_clamped),
        noise=noise_store, path_id=np.arange(P),
    )


# --------------------------------------------------------------------------
# diagnostics


def _pair_means(x, antithetic):
    if not antithetic:
        return x
    h = x.shape[-1] // 2
    return 0.5 * (x[..., :h] + x[..., h:])


@dataclass(frozen=True, eq=False)
class MartingaleReport:
    """Unconditional and conditional martingale diagnostics per report time.

    ``cond_t`` maps each report interval to the largest absolute robust
    t-statistic of the regression of the consumption increment on
    information at the interval start.
    """

    times: np.ndarray
    mean_c: np.ndarray
    se: np.ndarray
    z: np.ndarray
    c0: float
    drift: np.ndarray
    cond_t: np.ndarray
    cond_regressors: tuple
    threshold: float = 3.0

    @property
    def max_abs_z(self):
        return float(np.max(np.abs(self.z))) if self.z.size else 0.0

    def passes(self, conditional=False):
        ok = bool(np.all(np.abs(self.z) <= self.threshold))
        if conditional:
            ok = ok and bool(np.all(np.nan_to_num(self.cond_t) <= self.threshold))
        return ok

    def rows(self):
        return [
            (float(t), float(m), float(s), float(z), float(d), float(ct))
            for t, m, s, z, d, ct in zip(self.times, self.mean_c, self.se, self.z, self.drift, self.cond_t)
        ]


def _z_stat(dev, se, scale):
    if se > 0 and np.isfinite(se):
        return dev / se
    return 0.0 if abs(dev) <= 1e-12 * max(1.0, abs(scale)) else float(np.sign(dev) * np.inf)


def _robust_t(y, X, clusters):
    """OLS with cluster-robust (pair) standard errors; drops collinear columns."""
    keep = []
    for j in range(X.shape[1]):
        trial = X[:, keep + [j]]
        if np.linalg.matrix_rank(trial, tol=1e-10 * max(1.0, np.abs(trial).max()) * len(y) ** 0.5) == len(keep) + 1:
            keep.append(j)
    Xk = X[:, keep]
    XtX_inv = np.linalg.pinv(Xk.T @ Xk)
    beta = XtX_inv @ (Xk.T @ y)
    resid = y - Xk @ beta
    scores = Xk * resid[:, None]
    if clusters is not None:
        scores = scores[: len(y) // 2] + scores[len(y) // 2:]
    meat = scores.T @ scores
    cov = XtX_inv @ meat @ XtX_inv
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    t = np.full(X.shape[1], np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        tk = np.where(se > 0, beta / se, np.where(np.abs(beta) <= 1e-12, 0.0, np.inf))
    t[keep] = tk
    return t


def martingale_test(bundle, cfg=None, threshold=3.0):
    """z-statistics of ``mean c(t) - c(0)`` and a conditional increment test.

    Standard errors use antithetic pair means when the bundle is
    antithetic. The conditional test regresses ``c(t2) - c(t1)`` on
    ``[1, c(t1), c(t1)^2, c(t0), max_{s <= t1} c(s)]`` over consecutive
    report times (``t0`` the previous report time), with pair-clustered
    standard errors.
    """
    c = bundle.c
    c0 = float(np.mean(c[0]))
    P = bundle.paths
    anti = bundle.antithetic and P >= 2
    reps = bundle.report
    times = bundle.times[reps]
    mean_c = np.empty(reps.size)
    se = np.empty(reps.size)
    z = np.empty(reps.size)
    drift = np.empty(reps.size)
    for i, j in enumerate(reps):
        pm = _pair_means(c[j], anti)
        mean_c[i] = float(np.mean(c[j]))
        se[i] = float(np.std(pm, ddof=1) / np.sqrt(pm.size)) if pm.size > 1 else np.nan
        z[i] = _z_stat(mean_c[i] - c0, se[i], c0)
        drift[i] = np.log(mean_c[i] / c0) / times[i] if mean_c[i] > 0 else np.nan
    names = ("const", "c", "c^2", "c_prev", "running_max")
    cond = np.full(reps.size, np.nan)
    running = np.maximum.accumulate(c, axis=0)
    prev = 0
    for i, j in enumerate(reps):
        j1 = reps[i - 1] if i else 0
        if j1 == j:
            continue
        y = c[j] - c[j1]
        x1 = c[j1]
        X = np.column_stack([np.ones(P), x1, x1 * x1, c[prev], running[j1]])
        if P > X.shape[1] + 1:
            t = _robust_t(y, X, "pair" if anti else None)
            cond[i] = float(np.nanmax(np.abs(t)))
        prev = j1
    return MartingaleReport(times, mean_c, se, z, c0, drift, cond, names, threshold)


@dataclass(frozen=True)
class ExhaustionStats:
    """Terminal wealth measures at ``T - dt``.

    ``deflated_max``: max over paths of ``X / (x0 Y)``, the share of the
    initial budget not yet consumed. ``raw_max`` and ``raw_mean`` are
    ``X / x0``. ``budget_gap``: max over paths of
    ``|int_0^{T-dt} c / Y dt - x0| / x0`` by the trapezoid rule.
    """

    deflated_max: float
    raw_max: float
    raw_mean: float
    budget_gap: float
    steps: int
    dt: float


def exhaustion_check(bundle):
    j = bundle.record_index.size - 1
    deflated = np.exp(-bundle.drain[j])
    raw = bundle.X[j] / bundle.x0
    return ExhaustionStats(
        deflated_max=float(np.max(deflated)),
        raw_max=float(np.max(raw)),
        raw_mean=float(np.mean(raw)),
        budget_gap=float(np.max(np.abs(bundle.budget - 1.0))),
        steps=bundle.steps,
        dt=bundle.dt,
    )


@dataclass(frozen=True, eq=False)
class VolTable:
    """Realised versus predicted consumption variance per window."""

    times: np.ndarray
    realized: np.ndarray
    predicted: np.ndarray
    rel_error: np.ndarray

    def passes(self, rel_tol=0.05, abs_tol=1e-6):
        ok = np.where(self.predicted > abs_tol, self.rel_error <= rel_tol, self.realized <= abs_tol)
        return bool(np.all(ok))

    def rows(self):
        return list(zip(self.times.tolist(), self.realized.tolist(), self.predicted.tolist(), self.rel_error.tolist()))


def predicted_consumption_variance(market, pi, surface, t, r):
    """``sigma_c^2 = (e1 - sigma_r D_a)^2 + e2^2`` at (t, r)."""
    e1, e2 = pi.exposures(market, t, r)
    d_a = surface.duration(t, r) if surface is not None else 0.0
    return (e1 - market.sigma_r * d_a) ** 2 + e2 ** 2


def vol_check(bundle, market, pi, surface=None):
    """Compare realised quadratic variation of ``log c`` with ``sigma_c^2``.

    For each window the realised value is the path-average of
    ``sum (d log c)^2 / window length``; the prediction is the
    path-average of ``sigma_c^2`` by the trapezoid rule over the window
    end points.
    """
    if bundle.qv is None or bundle.r is None:
        raise ConfigError("bundle has no volatility windows; simulate a short-rate market with vol_window > 0")
    rows_t, real, pred = [], [], []
    pos = {int(k): i for i, k in enumerate(bundle.record_index)}
    for w, (s, e) in enumerate(zip(bundle.qv_start, bundle.qv_end)):
        length = (e - s) * bundle.dt
        real.append(float(np.mean(bundle.qv[w]) / length))
        ts, te = s * bundle.dt, e * bundle.dt
        ps = predicted_consumption_variance(market, pi, surface, ts, bundle.r[pos[int(s)]])
        pe = predicted_consumption_variance(market, pi, surface, te, bundle.r[pos[int(e)]])
        pred.append(float(np.mean(0.5 * (ps + pe))))
        rows_t.append(ts)
    real, pred = np.array(real), np.array(pred)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(pred > 0, np.abs(real - pred) / pred, np.inf)
    return VolTable(np.array(rows_t), real, pred, rel)

"""Market coefficient structures and short-rate path generation.

Two regimes are supported:

* ``DeterministicMarket``: money market plus ``n`` risky assets whose
  coefficients r(t), alpha(t), sigma(t) are deterministic curves.
* ``VasicekMarket``: a bond and a stock driven by an Ornstein-Uhlenbeck
  short rate ``dr = kappa (theta - r) dt - sigma_r dW1``. The minus sign is
  deliberate: a positive W1 shock lowers rates and raises bond prices, so
  bond rate-volatilities ``sigma11`` are positive.
"""

from dataclasses import dataclass, field

import numpy as np

from .curves import Constant, Curve, as_curve
from .errors import ConfigError, DomainError, InvalidGridError, SingularVolatilityError

#: condition-number bound above which sigma(t) is treated as singular
COND_LIMIT = 1e12
_TIME_SLACK = 1e-12


def _check_time(t, T):
    t_arr = np.asarray(t, dtype=float)
    slack = _TIME_SLACK * max(T, 1.0)
    if np.any(t_arr < -slack) or np.any(t_arr > T + slack) or not np.all(np.isfinite(t_arr)):
        raise DomainError(f"time {t!r} outside [0, {T}]")


@dataclass(frozen=True, eq=False)
class DeterministicMarket:
    """Money market with rate r(t) and ``n`` risky assets.

    ``alpha`` is a tuple of ``n`` drift curves and ``sigma`` an ``n x n``
    nested tuple of volatility curves (rows = assets, columns = Brownian
    motions). Plain numbers are promoted to constant curves.
    """

    T: float
    r: Curve
    alpha: tuple = ()
    sigma: tuple = ()

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError("horizon T must be positive")
        alpha = tuple(as_curve(a) for a in self.alpha)
        sigma = tuple(tuple(as_curve(s) for s in row) for row in self.sigma)
        n = len(alpha)
        if len(sigma) != n or any(len(row) != n for row in sigma):
            raise ConfigError(f"sigma must be {n}x{n} to match {n} drift curves")
        object.__setattr__(self, "r", as_curve(self.r))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def from_lambda(cls, T, r, sigma, lam):
        """Build the market from volatilities and market prices of risk.

        Drifts are reconstructed as ``alpha = 1 r + sigma lambda``.
        """
        r = as_curve(r)
        sig = [[as_curve(s) for s in row] for row in np.atleast_2d(np.asarray(sigma, dtype=object))]
        lam = [as_curve(x) for x in np.atleast_1d(np.asarray(lam, dtype=object))]
        alpha = []
        for row in sig:
            a = r
            for s, l in zip(row, lam):
                a = a + s * l
            alpha.append(a)
        return cls(T, r, tuple(alpha), tuple(tuple(row) for row in sig))

    @property
    def n(self):
        return len(self.alpha)

    def check_time(self, t):
        _check_time(t, self.T)

    def r_at(self, t):
        self.check_time(t)
        return self.r(t)

    def alpha_at(self, t):
        self.check_time(t)
        return np.array([a(t) for a in self.alpha], dtype=float)

    def sigma_at(self, t):
        self.check_time(t)
        return np.array([[s(t) for s in row] for row in self.sigma], dtype=float).reshape(self.n, self.n)

    def lambda_at(self, t):
        """Market price of risk, ``sigma(t)^-1 (alpha(t) - 1 r(t))``."""
        return lambda_of(self, t)

    def coefficients_on(self, times):
        """Vectorised coefficients on a time grid.

        Returns ``(r, alpha, sigma, lam)`` with shapes (K,), (K, n),
        (K, n, n), (K, n).
        """
        times = np.asarray(times, dtype=float)
        self.check_time(times)
        k, n = times.size, self.n
        r = np.broadcast_to(np.asarray(self.r(times), dtype=float), (k,)).copy()
        alpha = np.empty((k, n))
        sigma = np.empty((k, n, n))
        for i in range(n):
            alpha[:, i] = self.alpha[i](times)
            for j in range(n):
                sigma[:, i, j] = self.sigma[i][j](times)
        lam = np.zeros((k, n))
        if n:
            cond = np.linalg.cond(sigma)
            bad = ~(cond < COND_LIMIT)
            if np.any(bad):
                i = int(np.argmax(bad))
                raise SingularVolatilityError(float(times[i]), float(cond[i]))
            lam = np.linalg.solve(sigma, (alpha - r[:, None])[..., None])[..., 0]
        return r, alpha, sigma, lam


class MarketPriceOfRisk:
    """lambda(t) derived from a deterministic market; never set directly."""

    def __init__(self, market):
        self.market = market

    def __call__(self, t):
        return lambda_of(self.market, t)


def lambda_of(market, t):
    """Solve ``sigma(t) lambda = alpha(t) - 1 r(t)`` without forming an inverse."""
    r = market.r_at(t)
    if market.n == 0:
        return np.zeros(0)
    sig = market.sigma_at(t)
    cond = np.linalg.cond(sig)
    if not cond < COND_LIMIT:
        raise SingularVolatilityError(float(t), float(cond))
    return np.linalg.solve(sig, market.alpha_at(t) - r)


# --------------------------------------------------------------------------
# Vasicek regime


def vasicek_loading(kappa, tau):
    """(1 - exp(-kappa tau)) / kappa, with the kappa -> 0 limit tau."""
    tau = np.asarray(tau, dtype=float)
    if kappa == 0.0:
        return tau
    return -np.expm1(-kappa * tau) / kappa


@dataclass(frozen=True)
class ZcbVolatility:
    """Rate volatility of a zero-coupon bond maturing at ``maturity``.

    Default instance for sigma11: ``sigma_r * (1 - exp(-kappa (M - t))) / kappa``.
    """

    kappa: float
    sigma_r: float
    maturity: float

    def __call__(self, t, r):
        tau = np.maximum(self.maturity - np.asarray(t, dtype=float), 0.0)
        out = self.sigma_r * vasicek_loading(self.kappa, tau)
        return out + 0.0 * np.asarray(r, dtype=float)

    def to_spec(self):
        return {"kind": "zcb", "maturity": self.maturity}


@dataclass(frozen=True)
class ConstantVolatility:
    value: float

    def __call__(self, t, r):
        shape = np.broadcast(np.asarray(t), np.asarray(r)).shape
        if shape == ():
            return float(self.value)
        return np.full(shape, float(self.value))

    def to_spec(self):
        return float(self.value)


@dataclass(frozen=True, eq=False)
class VasicekMarket:
    """Bond/stock market with an OU short rate.

    ``sigma11(t, r)`` and ``sigma21(t, r)`` are the rate volatilities of the
    bond and the stock; ``sigma22`` is the stock's own volatility. The
    market prices of rate and stock risk, ``lambda1`` and ``lambda2``, are
    constants. When ``sigma11`` is omitted the bond is a zero-coupon bond
    maturing at ``T``.
    """

    kappa: float
    theta: float
    sigma_r: float
    r0: float
    T: float
    lambda1: float = 0.0
    lambda2: float = 0.0
    sigma22: float = 0.2
    sigma11: object = None
    sigma21: object = field(default_factory=lambda: ConstantVolatility(0.0))

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError("horizon T must be positive")
        if not self.sigma_r >= 0:
            raise ConfigError("sigma_r must be non-negative")
        if self.sigma22 == 0:
            raise ConfigError("sigma22 must be non-zero")
        if self.kappa < 0:
            raise ConfigError("kappa must be non-negative")
        if self.sigma11 is None:
            object.__setattr__(self, "sigma11", ZcbVolatility(self.kappa, self.sigma_r, self.T))
        elif np.ndim(self.sigma11) == 0 and not callable(self.sigma11):
            object.__setattr__(self, "sigma11", ConstantVolatility(float(self.sigma11)))
        if np.ndim(self.sigma21) == 0 and not callable(self.sigma21):
            object.__setattr__(self, "sigma21", ConstantVolatility(float(self.sigma21)))

    def check_time(self, t):
        _check_time(t, self.T)

    def mu(self, t, r):
        """Physical drift of the short rate."""
        return self.kappa * (self.theta - np.asarray(r, dtype=float))

    def mu_q(self, t, r):
        """Drift under the martingale measure, ``mu + lambda1 sigma_r``."""
        return self.mu(t, r) + self.lambda1 * self.sigma_r

    @property
    def theta_q(self):
        if self.kappa == 0.0:
            raise DomainError("risk-neutral mean level undefined for kappa = 0")
        return self.theta + self.lambda1 * self.sigma_r / self.kappa

    def stationary_std(self):
        if self.kappa > 0:
            return self.sigma_r / np.sqrt(2.0 * self.kappa)
        return self.sigma_r * np.sqrt(self.T)

    def ou_transition(self, dt):
        """(decay, conditional std) of the exact OU transition over ``dt``."""
        if self.kappa == 0.0:
            return 1.0, self.sigma_r * np.sqrt(dt)
        decay = np.exp(-self.kappa * dt)
        var = self.sigma_r**2 * (-np.expm1(-2.0 * self.kappa * dt)) / (2.0 * self.kappa)
        return decay, np.sqrt(var)

    def ou_mean(self, r, t):
        """Conditional mean of r(t) given r(0) = r."""
        return self.theta + (r - self.theta) * np.exp(-self.kappa * t)

    def ou_variance(self, t):
        if self.kappa == 0.0:
            return self.sigma_r**2 * t
        return self.sigma_r**2 * (-np.expm1(-2.0 * self.kappa * t)) / (2.0 * self.kappa)

    def sigma_matrix(self, t, r):
        return np.array([[self.sigma11(t, r), 0.0], [self.sigma21(t, r), self.sigma22]], dtype=float)

    def check_spanning(self, t_nodes, r_nodes):
        """Raise if the bond has zero rate-volatility at any (t, r) node with t < T."""
        from .errors import SpanningError

        tt, rr = np.meshgrid(np.asarray(t_nodes, dtype=float), np.asarray(r_nodes, dtype=float), indexing="ij")
        vals = np.asarray(self.sigma11(tt, rr), dtype=float) * np.ones_like(tt)
        live = tt < self.T - _TIME_SLACK * self.T
        bad = live & (vals == 0.0)
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise SpanningError(f"sigma11 vanishes at t={tt[i, j]}, r={rr[i, j]}")


def _validate_grid(grid, T):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise InvalidGridError("time grid must be a 1-d array with at least two points")
    if np.any(np.diff(grid) <= 0):
        raise InvalidGridError("time grid must be strictly increasing")
    if abs(grid[0]) > _TIME_SLACK * max(T, 1.0) or abs(grid[-1] - T) > 1e-9 * max(T, 1.0):
        raise InvalidGridError(f"time grid must run from 0 to T={T}")
    return grid


def short_rate_path(market, grid, noise, scheme="exact"):
    """Short-rate path(s) on ``grid`` driven by standard normal ``noise``.

    ``noise`` has one draw per step, shape ``(steps,)`` or
    ``(steps, paths)``; draw ``z`` is the increment ``dW1 / sqrt(dt)``.
    The exact scheme uses the OU transition; ``scheme="euler"`` is kept for
    cross-checks. Both honour the ``- sigma_r dW1`` sign convention.
    """
    grid = _validate_grid(grid, market.T)
    noise = np.asarray(noise, dtype=float)
    if noise.shape[0] != grid.size - 1:
        raise InvalidGridError(f"need {grid.size - 1} noise draws per path, got {noise.shape[0]}")
    out = np.empty((grid.size,) + noise.shape[1:])
    out[0] = market.r0
    dts = np.diff(grid)
    for k, dt in enumerate(dts):
        r = out[k]
        if scheme == "exact":
            decay, sd = market.ou_transition(dt)
            out[k + 1] = market.theta + (r - market.theta) * decay - sd * noise[k]
        elif scheme == "euler":
            out[k + 1] = r + market.mu(grid[k], r) * dt - market.sigma_r * np.sqrt(dt) * noise[k]
        else:
            raise ConfigError(f"unknown short-rate scheme {scheme!r}")
    return out

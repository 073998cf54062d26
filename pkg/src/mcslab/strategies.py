"""Investment strategies, CRRA preferences and consumption rules.

A consumption rule is a wealth-to-consumption factor ``Z`` with
``c = X / Z``. Rules with a deterministic factor are annuity factors
``B_f`` for some rate curve ``f``; the martingale consumption strategy under
deterministic coefficients uses ``f3 = r + pi (alpha - 1 r)``, the
CRRA-optimal rule uses ``f2``. Rules driven by the short rate are backed by
a tabulated surface ``a(t, r)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .annuity import annuity_factor, factor_table
from .curves import Constant, Curve, FunctionCurve, as_curve
from .errors import ConfigError, PreferenceError, RuleError
from .market import DeterministicMarket, lambda_of

REGIMES = ("deterministic", "rate")
RULE_KINDS = ("mcs-deterministic", "merton", "annuity-certain", "pde-surface", "factor")


# --------------------------------------------------------------------------
# investment strategies


class TimeWeight:
    """Adapter turning a time curve into a (t, r) weight."""

    def __init__(self, curve):
        self.curve = as_curve(curve)

    def __call__(self, t, r):
        t = np.asarray(t, dtype=float)
        shape = np.broadcast(t, np.asarray(r)).shape
        return np.broadcast_to(np.asarray(self.curve(t), dtype=float), shape) + 0.0

    def to_spec(self):
        return self.curve.to_spec()


class GridWeight:
    """Bilinear interpolant of a weight tabulated on a (t, r) grid.

    Outside the grid the weight is extended linearly from the edge cells.
    """

    def __init__(self, t_nodes, r_nodes, values):
        self.t_nodes = np.asarray(t_nodes, dtype=float)
        self.r_nodes = np.asarray(r_nodes, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self._interp = RegularGridInterpolator(
            (self.t_nodes, self.r_nodes), self.values, bounds_error=False, fill_value=None
        )

    def __call__(self, t, r):
        t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
        out = self._interp(np.stack([t.ravel(), r.ravel()], axis=-1)).reshape(t.shape)
        return float(out) if out.ndim == 0 else out


def _as_weight(w):
    if isinstance(w, (Curve, dict)) or np.ndim(w) == 0 and not callable(w):
        return TimeWeight(w)
    if callable(w):
        return w
    raise ConfigError(f"cannot interpret {w!r} as a strategy weight")


@dataclass(frozen=True, eq=False)
class InvestmentStrategy:
    """Fractions of wealth held in the risky assets.

    ``regime="deterministic"``: ``weights`` holds one time curve per asset.
    ``regime="rate"``: ``weights = (pi1, pi2)`` for the bond and the stock,
    each a function of (t, r). Short positions and leverage are allowed.
    """

    weights: tuple
    regime: str = "deterministic"

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown strategy regime {self.regime!r}")
        if self.regime == "deterministic":
            ws = tuple(as_curve(w) for w in self.weights)
        else:
            if len(self.weights) != 2:
                raise ConfigError("a rate-driven strategy needs exactly two weights (bond, stock)")
            ws = tuple(_as_weight(w) for w in self.weights)
        object.__setattr__(self, "weights", ws)

    @property
    def n(self):
        return len(self.weights)

    def at(self, t, r=None):
        if self.regime == "deterministic":
            return np.array([w(t) for w in self.weights], dtype=float)
        if r is None:
            raise ConfigError("rate-driven strategy needs the short rate")
        return tuple(w(t, r) for w in self.weights)

    def on(self, times):
        """Deterministic weights on a time grid, shape (K, n)."""
        times = np.asarray(times, dtype=float)
        out = np.empty((times.size, self.n))
        for i, w in enumerate(self.weights):
            out[:, i] = w(times)
        return out

    def exposures(self, market, t, r):
        """Rate exposure ``pi1 s11 + pi2 s21`` and stock exposure ``pi2 s22``."""
        pi1, pi2 = self.at(t, r)
        e1 = pi1 * market.sigma11(t, r) + pi2 * market.sigma21(t, r)
        return e1, pi2 * market.sigma22


def constant_strategy(*values):
    return InvestmentStrategy(tuple(Constant(float(v)) for v in values))


def rate_strategy(pi1, pi2):
    return InvestmentStrategy((pi1, pi2), regime="rate")


def _require_deterministic(pi, market):
    if pi.regime != "deterministic":
        raise ConfigError("strategy must be deterministic in this market")
    if pi.n != market.n:
        raise ConfigError(f"strategy has {pi.n} weights but the market has {market.n} risky assets")


# --------------------------------------------------------------------------
# preferences


@dataclass(frozen=True, eq=False)
class CrraPreferences:
    """Relative risk aversion ``gamma`` and time-preference rate ``beta(t)``."""

    gamma: float
    beta: Curve

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise PreferenceError(f"gamma must be positive, got {self.gamma}")
        object.__setattr__(self, "beta", as_curve(self.beta))


# --------------------------------------------------------------------------
# rate curves


def excess_return_curve(market, pi):
    """t -> pi(t) (alpha(t) - 1 r(t)) as a curve."""
    _require_deterministic(pi, market)
    out = Constant(0.0)
    for w, a in zip(pi.weights, market.alpha):
        out = out + w * (a - market.r)
    return out


def mcs_rate_curve(market, pi):
    """f3 = r + pi sigma lambda, the expected instantaneous portfolio return."""
    return market.r + excess_return_curve(market, pi)


def mcs_rate_f3(market, pi, t):
    _require_deterministic(pi, market)
    market.check_time(t)
    return float(market.r_at(t) + pi.at(t) @ (market.alpha_at(t) - market.r_at(t)))


def mcs_factor(market, pi, t):
    """B_{f3}(t): the martingale wealth-to-consumption factor."""
    market.check_time(t)
    return annuity_factor(mcs_rate_curve(market, pi), t, market.T)


def _single_asset(market):
    if market.n > 1:
        raise ConfigError("the CRRA benchmark is implemented for at most one risky asset")


def _lambda_sq_curve(market):
    """||lambda(t)||^2 as a curve (closed form when the market is constant)."""
    if market.n == 0:
        return Constant(0.0)
    coeffs = [market.r, *market.alpha, *(s for row in market.sigma for s in row)]
    if all(c.is_constant for c in coeffs):
        lam = lambda_of(market, 0.0)
        return Constant(float(lam @ lam))

    def fn(t):
        shape = np.shape(t)
        t = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
        _, _, _, lam = market.coefficients_on(np.clip(t, 0.0, market.T))
        return np.sum(lam * lam, axis=1).reshape(shape)

    bps = tuple(sorted({b for c in coeffs for b in c.breakpoints}))
    disc = tuple(sorted({b for c in coeffs for b in c.discontinuities}))
    return FunctionCurve(fn, bps, disc)


def merton_rate_curves(market, prefs):
    """(f1, f2): the CRRA factor rates without and with the risky asset."""
    _single_asset(market)
    g = prefs.gamma
    f1 = (prefs.beta - (1.0 - g) * market.r) * (1.0 / g)
    f2 = f1 + _lambda_sq_curve(market) * ((g - 1.0) / (2.0 * g * g))
    return f1, f2


def merton_policy(market, prefs, t):
    """(pi*, factor): ``pi* = lambda / (sigma gamma)`` and ``B_{f2}(t)``.

    With no risky asset ``pi*`` is empty and the factor is ``B_{f1}(t)``.
    """
    _single_asset(market)
    market.check_time(t)
    f1, f2 = merton_rate_curves(market, prefs)
    if market.n == 0:
        return np.zeros(0), annuity_factor(f1, t, market.T)
    lam = lambda_of(market, t)
    sig = market.sigma_at(t)[0, 0]
    return lam / (sig * prefs.gamma), annuity_factor(f2, t, market.T)


def merton_strategy(market, prefs):
    """The CRRA-optimal strategy ``lambda / (sigma gamma)`` as a time curve."""
    _single_asset(market)
    if market.n == 0:
        return InvestmentStrategy(())
    excess = (market.alpha[0] - market.r) * (1.0 / prefs.gamma)
    sig = market.sigma[0][0]
    if sig.is_constant:
        return InvestmentStrategy((excess * (1.0 / (sig(0.0) ** 2)),))
    return InvestmentStrategy((FunctionCurve(lambda t: np.asarray(excess(t)) / np.asarray(sig(t)) ** 2,
                                             excess.breakpoints, excess.discontinuities),))


def martingale_beta(market, gamma, t):
    """Time preference under which CRRA-optimal consumption is a martingale."""
    if not gamma > 0:
        raise PreferenceError(f"gamma must be positive, got {gamma}")
    market.check_time(t)
    lam = lambda_of(market, t)
    return float(market.r_at(t) + (lam @ lam) * (gamma + 1.0) / (2.0 * gamma))


def martingale_beta_curve(market, gamma):
    if not gamma > 0:
        raise PreferenceError(f"gamma must be positive, got {gamma}")
    return market.r + _lambda_sq_curve(market) * ((gamma + 1.0) / (2.0 * gamma))


def merton_consumption_drift_vol(prefs, market, t):
    """Drift and volatility rates of CRRA-optimal consumption, ``dc / c``."""
    market.check_time(t)
    g = prefs.gamma
    lam = lambda_of(market, t)
    lam_sq = float(lam @ lam)
    drift = (market.r_at(t) - prefs.beta(t) + lam_sq * (g + 1.0) / (2.0 * g)) / g
    return drift, np.sqrt(lam_sq) / g


# --------------------------------------------------------------------------
# consumption rules


class ConsumptionRule:
    """A wealth-to-consumption factor. ``kind`` is one of ``RULE_KINDS``."""

    kind = "factor"
    T = None

    def factor(self, t, r=None):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class DeterministicFactorRule(ConsumptionRule):
    """Factor ``Z(t) = B_f(t)`` for a deterministic rate curve ``f``."""

    f: Curve
    T: float
    kind: str = "mcs-deterministic"

    def __post_init__(self):
        object.__setattr__(self, "f", as_curve(self.f))
        if self.kind not in RULE_KINDS:
            raise ConfigError(f"unknown rule kind {self.kind!r}")

    def factor(self, t, r=None):
        return annuity_factor(self.f, t, self.T)

    def table(self, times):
        """(B_f, int_0^t f) on a sorted grid; raises if B_f <= 0 before T."""
        B, F = factor_table(self.f, times, self.T)
        live = np.asarray(times) < self.T
        if np.any(B[live] <= 0) or not np.all(np.isfinite(B)):
            i = int(np.argmax(~(B[live] > 0)))
            raise RuleError(f"factor is not positive at t={times[i]}")
        return B, F

    def drift_residual(self, market, pi, t):
        return drift_residual(self, market, pi, t)


@dataclass(frozen=True, eq=False)
class SurfaceRule(ConsumptionRule):
    """Factor ``Z(t) = a(t, r(t))`` read from a tabulated surface."""

    surface: object
    kind: str = "pde-surface"

    @property
    def T(self):
        return self.surface.T

    def factor(self, t, r=None):
        if r is None:
            raise ConfigError("a surface rule needs the short rate")
        return self.surface(t, r)


def mcs_rule(market, pi):
    return DeterministicFactorRule(mcs_rate_curve(market, pi), market.T, "mcs-deterministic")


def merton_rule(market, prefs):
    """(strategy, rule) of the CRRA benchmark."""
    f1, f2 = merton_rate_curves(market, prefs)
    f = f2 if market.n else f1
    return merton_strategy(market, prefs), DeterministicFactorRule(f, market.T, "merton")


def annuity_certain_rule(market):
    """Deterministic rates: consume the annuity bought with current wealth."""
    return DeterministicFactorRule(market.r, market.T, "annuity-certain")


def linear_drain_rule(T):
    """Factor ``T - t``: wealth drained at a constant rate when nothing is invested."""
    return DeterministicFactorRule(Constant(0.0), T, "factor")


def drift_residual(rule, market, pi, t):
    """``r + pi sigma lambda - f`` for a rule with deterministic factor ``B_f``.

    Under a deterministic factor ``dc = c (r + pi sigma lambda - f) dt + ...``,
    so the residual is the drift rate of consumption.
    """
    if not isinstance(rule, DeterministicFactorRule):
        raise ConfigError("drift residual needs a rule with a deterministic factor")
    if not isinstance(market, DeterministicMarket):
        raise ConfigError("drift residual needs a deterministic market")
    return mcs_rate_f3(market, pi, t) - float(rule.f(t))

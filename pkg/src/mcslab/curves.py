"""Scalar functions of time used as rates, strategy weights and coefficients.

Curves come in a few named parametric families (constant, affine,
piecewise-constant, tabulated) whose antiderivatives are known in closed
form, plus a generic ``FunctionCurve`` whose integrals fall back to
adaptive quadrature. Arithmetic between curves stays inside the closed-form
families where that is possible.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .quadrature import integrate


def _scalar_or_array(x, like):
    if np.ndim(like) == 0:
        return float(x)
    return x


class Curve:
    """Base class. Subclasses implement ``__call__`` and ``antiderivative``."""

    kind = "abstract"
    #: all points where the curve or its slope may jump (used for quadrature splitting)
    breakpoints: tuple = ()
    #: points where the curve value itself jumps
    discontinuities: tuple = ()

    def __call__(self, t):
        raise NotImplementedError

    def antiderivative(self, t):
        """F(t) = integral of the curve from 0 to t."""
        t_arr = np.asarray(t, dtype=float)
        out = np.array(
            [integrate(self, 0.0, float(s), self.breakpoints, tol=1e-13) for s in t_arr.ravel()]
        ).reshape(t_arr.shape)
        return _scalar_or_array(out, t)

    def integral(self, a, b):
        return self.antiderivative(b) - self.antiderivative(a)

    @property
    def is_constant(self):
        return False

    def to_spec(self):
        raise ConfigError(f"curve of kind {self.kind!r} cannot be serialised")

    # arithmetic -------------------------------------------------------

    def __add__(self, other):
        return add(self, as_curve(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(as_curve(other), -1.0))

    def __rsub__(self, other):
        return add(as_curve(other), scale(self, -1.0))

    def __mul__(self, other):
        if np.ndim(other) == 0 and not isinstance(other, Curve):
            return scale(self, float(other))
        return multiply(self, as_curve(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


@dataclass(frozen=True, eq=False)
class Constant(Curve):
    value: float
    kind = "constant"

    def __call__(self, t):
        if np.ndim(t) == 0:
            return float(self.value)
        return np.full(np.shape(t), float(self.value))

    def antiderivative(self, t):
        return self.value * (np.asarray(t, dtype=float) if np.ndim(t) else float(t))

    @property
    def is_constant(self):
        return True

    def to_spec(self):
        return float(self.value)


@dataclass(frozen=True, eq=False)
class Affine(Curve):
    """f(t) = intercept + slope * t."""

    intercept: float
    slope: float
    kind = "affine"

    def __call__(self, t):
        return _scalar_or_array(self.intercept + self.slope * np.asarray(t, dtype=float), t)

    def antiderivative(self, t):
        s = np.asarray(t, dtype=float)
        return _scalar_or_array(self.intercept * s + 0.5 * self.slope * s * s, t)

    @property
    def is_constant(self):
        return self.slope == 0.0

    def to_spec(self):
        return {"kind": "affine", "intercept": self.intercept, "slope": self.slope}

    @classmethod
    def between(cls, t0, v0, t1, v1):
        """Straight line through (t0, v0) and (t1, v1)."""
        slope = (v1 - v0) / (t1 - t0)
        return cls(v0 - slope * t0, slope)


@dataclass(frozen=True, eq=False)
class PiecewiseConstant(Curve):
    """Right-continuous step function.

    ``values[0]`` applies before ``times[0]``, ``values[i]`` on
    ``[times[i-1], times[i])`` and ``values[-1]`` from ``times[-1]`` on.
    """

    times: tuple
    values: tuple
    kind = "piecewise-constant"

    def __post_init__(self):
        times = tuple(float(x) for x in self.times)
        values = tuple(float(x) for x in self.values)
        if len(values) != len(times) + 1:
            raise ConfigError("piecewise-constant curve needs len(values) == len(times) + 1")
        if any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise ConfigError("piecewise-constant breakpoints must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def breakpoints(self):
        return self.times

    @property
    def discontinuities(self):
        return tuple(t for t, a, b in zip(self.times, self.values[:-1], self.values[1:]) if a != b)

    def __call__(self, t):
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        return _scalar_or_array(np.asarray(self.values)[idx], t)

    def antiderivative(self, t):
        s = np.asarray(t, dtype=float)
        knots = np.asarray(self.times)
        vals = np.asarray(self.values)
        if knots.size == 0:
            return _scalar_or_array(vals[0] * s, t)
        out = _step_primitive(s, knots, vals) - _step_primitive(np.float64(0.0), knots, vals)
        return _scalar_or_array(out, t)

    def to_spec(self):
        return {"kind": "piecewise-constant", "times": list(self.times), "values": list(self.values)}


@dataclass(frozen=True, eq=False)
class Tabulated(Curve):
    """Linear interpolation through (times, values), flat outside the table."""

    times: tuple
    values: tuple
    kind = "tabulated"

    def __post_init__(self):
        times = tuple(float(x) for x in self.times)
        values = tuple(float(x) for x in self.values)
        if len(times) != len(values) or len(times) < 2:
            raise ConfigError("tabulated curve needs at least two (time, value) pairs")
        if any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise ConfigError("tabulated times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def breakpoints(self):
        return self.times

    def __call__(self, t):
        return _scalar_or_array(np.interp(np.asarray(t, dtype=float), self.times, self.values), t)

    def antiderivative(self, t):
        s = np.asarray(t, dtype=float)
        knots = np.asarray(self.times)
        vals = np.asarray(self.values)
        out = _linear_primitive(s, knots, vals) - _linear_primitive(np.float64(0.0), knots, vals)
        return _scalar_or_array(out, t)

    def to_spec(self):
        return {"kind": "tabulated", "times": list(self.times), "values": list(self.values)}


@dataclass(frozen=True, eq=False)
class FunctionCurve(Curve):
    """Arbitrary vectorised function of time; integrals by quadrature."""

    fn: object
    breakpoints: tuple = ()
    discontinuities: tuple = ()
    kind = "function"

    def __call__(self, t):
        return _scalar_or_array(np.asarray(self.fn(np.asarray(t, dtype=float)), dtype=float), t)


def _step_primitive(x, knots, vals):
    """Integral from knots[0] to x of a right-continuous step function."""
    seg = np.concatenate(([0.0], np.cumsum(np.diff(knots) * vals[1:-1])))
    idx = np.searchsorted(knots, x, side="right")
    j = np.maximum(idx - 1, 0)
    inside = seg[j] + vals[idx] * (x - knots[j])
    return np.where(idx == 0, vals[0] * (x - knots[0]), inside)


def _linear_primitive(x, knots, vals):
    """Integral from knots[0] to x of the flat-extrapolated linear interpolant."""
    widths = np.diff(knots)
    seg = np.concatenate(([0.0], np.cumsum(0.5 * widths * (vals[1:] + vals[:-1]))))
    slopes = np.diff(vals) / widths
    idx = np.searchsorted(knots, x, side="right")
    j = np.clip(idx - 1, 0, knots.size - 2)
    dx = x - knots[j]
    inside = seg[j] + vals[j] * dx + 0.5 * slopes[j] * dx * dx
    after = seg[-1] + vals[-1] * (x - knots[-1])
    return np.where(idx == 0, vals[0] * (x - knots[0]), np.where(idx >= knots.size, after, inside))


# construction helpers --------------------------------------------------


def as_curve(x):
    """Coerce numbers and spec dicts to curves."""
    if isinstance(x, Curve):
        return x
    if isinstance(x, dict):
        return curve_from_spec(x)
    if callable(x):
        return FunctionCurve(x)
    if np.ndim(x) == 0:
        return Constant(float(x))
    raise ConfigError(f"cannot interpret {x!r} as a curve")


def curve_from_spec(spec, key_path="curve"):
    """Build a curve from a config value: a number or a table with ``kind``."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return Constant(float(spec))
    if not isinstance(spec, dict):
        raise ConfigError(f"expected a number or a table, got {spec!r}", key_path)
    kind = spec.get("kind")
    try:
        if kind == "constant":
            return Constant(float(spec["value"]))
        if kind == "affine":
            if "start" in spec:
                return Affine.between(
                    float(spec.get("t0", 0.0)), float(spec["start"]),
                    float(spec["t1"]), float(spec["end"]),
                )
            return Affine(float(spec["intercept"]), float(spec["slope"]))
        if kind == "piecewise-constant":
            return PiecewiseConstant(tuple(spec["times"]), tuple(spec["values"]))
        if kind == "tabulated":
            return Tabulated(tuple(spec["times"]), tuple(spec["values"]))
    except KeyError as exc:
        raise ConfigError(f"missing field {exc.args[0]!r}", key_path) from None
    raise ConfigError(f"unknown curve kind {kind!r}", key_path)


def scale(c, k):
    if isinstance(c, Constant):
        return Constant(k * c.value)
    if isinstance(c, Affine):
        return Affine(k * c.intercept, k * c.slope)
    if isinstance(c, PiecewiseConstant):
        return PiecewiseConstant(c.times, tuple(k * v for v in c.values))
    if isinstance(c, Tabulated):
        return Tabulated(c.times, tuple(k * v for v in c.values))
    return FunctionCurve(lambda t, c=c: k * np.asarray(c(t)), c.breakpoints, c.discontinuities)


def _merge(*tuples):
    return tuple(sorted(set().union(*tuples)))


def add(a, b):
    if isinstance(a, Constant) and isinstance(b, Constant):
        return Constant(a.value + b.value)
    if isinstance(a, (Constant, Affine)) and isinstance(b, (Constant, Affine)):
        ia, sa = (a.value, 0.0) if isinstance(a, Constant) else (a.intercept, a.slope)
        ib, sb = (b.value, 0.0) if isinstance(b, Constant) else (b.intercept, b.slope)
        return Affine(ia + ib, sa + sb)
    if isinstance(a, Constant) and isinstance(b, PiecewiseConstant):
        a, b = b, a
    if isinstance(a, PiecewiseConstant) and isinstance(b, Constant):
        return PiecewiseConstant(a.times, tuple(v + b.value for v in a.values))
    return FunctionCurve(
        lambda t: np.asarray(a(t)) + np.asarray(b(t)),
        _merge(a.breakpoints, b.breakpoints),
        _merge(a.discontinuities, b.discontinuities),
    )


def multiply(a, b):
    if isinstance(a, Constant):
        return scale(b, a.value)
    if isinstance(b, Constant):
        return scale(a, b.value)
    return FunctionCurve(
        lambda t: np.asarray(a(t)) * np.asarray(b(t)),
        _merge(a.breakpoints, b.breakpoints),
        _merge(a.discontinuities, b.discontinuities),
    )

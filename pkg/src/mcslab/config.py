"""Experiment specs: TOML files resolved into model objects.

A spec is a mapping with optional tables ``market``, ``strategy``,
``preferences``, ``rule``, ``simulation``, ``pde`` and ``tree``. Every
resolution failure raises ``ConfigError`` carrying the dotted key path of
the offending entry.
"""

import hashlib
import json
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .curves import Constant, curve_from_spec
from .discrete import ScenarioTree, dependent_tree, fixed_rate_tree, iid_tree
from .errors import ConfigError
from .market import DeterministicMarket, VasicekMarket
from .simulator import SimConfig
from .strategies import (
    CrraPreferences,
    InvestmentStrategy,
    annuity_certain_rule,
    linear_drain_rule,
    martingale_beta_curve,
    mcs_rule,
    merton_rule,
    merton_strategy,
)

COMMANDS = ("factor", "simulate", "pde", "annuity", "discrete", "compare-merton", "convergence")


def load_toml(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", "--config") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}", "--config") from None


def spec_hash(raw):
    """SHA-256 of the canonical JSON form of a spec mapping."""
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _table(raw, key, required=True):
    val = raw.get(key)
    if val is None:
        if required:
            raise ConfigError("missing table", key)
        return {}
    if not isinstance(val, dict):
        raise ConfigError("expected a table", key)
    return val


def _num(d, key, path, default=None):
    if key not in d:
        if default is None:
            raise ConfigError("missing value", f"{path}.{key}")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}", f"{path}.{key}")
    return float(v)


def _int(d, key, path, default=None):
    v = _num(d, key, path, default)
    if v != int(v):
        raise ConfigError(f"expected an integer, got {v!r}", f"{path}.{key}")
    return int(v)


def _curve(d, key, path, default=None):
    if key not in d:
        if default is None:
            raise ConfigError("missing value", f"{path}.{key}")
        return Constant(float(default))
    return curve_from_spec(d[key], f"{path}.{key}")


def _vol(v, path):
    """Number or curve spec; constants become plain floats for the short-rate market."""
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    c = curve_from_spec(v, path)
    return lambda t, r, c=c: c(t) + 0.0 * np.asarray(r)


def build_market(raw):
    m = _table(raw, "market")
    kind = m.get("kind", "deterministic")
    try:
        if kind == "deterministic":
            T = _num(m, "T", "market")
            r = _curve(m, "r", "market")
            sig = m.get("sigma", [])
            if isinstance(sig, (int, float)) or isinstance(sig, dict):
                sig = [[sig]]
            elif sig and not isinstance(sig[0], list):
                sig = [sig] if len(sig) == 1 else [[s] for s in sig]
            sigma = [[curve_from_spec(s, f"market.sigma[{i}][{j}]") for j, s in enumerate(row)]
                     for i, row in enumerate(sig)]
            if any(len(row) != len(sigma) for row in sigma):
                raise ConfigError("sigma must be a square matrix", "market.sigma")
            if "lambda" in m and "alpha" in m:
                raise ConfigError("give either lambda or alpha, not both", "market")
            if "lambda" in m:
                lam = m["lambda"] if isinstance(m["lambda"], list) else [m["lambda"]]
                if len(lam) != len(sigma):
                    raise ConfigError("lambda length must match sigma", "market.lambda")
                lam = [curve_from_spec(x, f"market.lambda[{i}]") for i, x in enumerate(lam)]
                if not sigma:
                    return DeterministicMarket(T, r, (), ())
                return DeterministicMarket.from_lambda(T, r, sigma, lam)
            alpha = m.get("alpha", [])
            alpha = alpha if isinstance(alpha, list) else [alpha]
            if len(alpha) != len(sigma):
                raise ConfigError("alpha length must match sigma", "market.alpha")
            alpha = tuple(curve_from_spec(x, f"market.alpha[{i}]") for i, x in enumerate(alpha))
            return DeterministicMarket(T, r, alpha, tuple(tuple(row) for row in sigma))
        if kind == "vasicek":
            kw = {}
            if "sigma11" in m:
                kw["sigma11"] = _vol(m["sigma11"], "market.sigma11")
            if "sigma21" in m:
                kw["sigma21"] = _vol(m["sigma21"], "market.sigma21")
            return VasicekMarket(
                kappa=_num(m, "kappa", "market"),
                theta=_num(m, "theta", "market"),
                sigma_r=_num(m, "sigma_r", "market"),
                r0=_num(m, "r0", "market"),
                T=_num(m, "T", "market"),
                lambda1=_num(m, "lambda1", "market", 0.0),
                lambda2=_num(m, "lambda2", "market", 0.0),
                sigma22=_num(m, "sigma22", "market", 0.2),
                **kw,
            )
    except ConfigError as exc:
        if exc.key_path is None:
            raise ConfigError(str(exc), "market") from None
        raise
    raise ConfigError(f"unknown market kind {kind!r}", "market.kind")


def build_preferences(raw, market):
    p = _table(raw, "preferences", required=False)
    if not p:
        return None
    gamma = _num(p, "gamma", "preferences")
    beta = p.get("beta", "martingale")
    if beta == "martingale":
        beta = martingale_beta_curve(market, gamma)
    elif beta == "r":
        beta = market.r
    else:
        beta = curve_from_spec(beta, "preferences.beta")
    return CrraPreferences(gamma, beta)


def build_strategy(raw, market, prefs=None):
    s = _table(raw, "strategy", required=False)
    kind = s.get("kind", "weights")
    if kind == "merton":
        if prefs is None:
            raise ConfigError("the Merton strategy needs a [preferences] table", "strategy.kind")
        return merton_strategy(market, prefs)
    if isinstance(market, VasicekMarket):
        if kind == "hedge":
            return None  # built from the annuity surface by the caller
        if kind != "weights":
            raise ConfigError(f"unknown strategy kind {kind!r}", "strategy.kind")
        return InvestmentStrategy(
            (_curve(s, "pi1", "strategy", 0.0), _curve(s, "pi2", "strategy", 0.0)), regime="rate"
        )
    if kind != "weights":
        raise ConfigError(f"unknown strategy kind {kind!r}", "strategy.kind")
    w = s.get("weights", [0.0] * market.n)
    w = w if isinstance(w, list) else [w]
    if len(w) != market.n:
        raise ConfigError(f"expected {market.n} weights, got {len(w)}", "strategy.weights")
    return InvestmentStrategy(tuple(curve_from_spec(x, f"strategy.weights[{i}]") for i, x in enumerate(w)))


def build_rule(raw, market, pi, prefs=None):
    """Consumption rule for deterministic markets (``mcs``, ``merton``, ``annuity``, ``linear-drain``)."""
    r = _table(raw, "rule", required=False)
    kind = r.get("kind", "mcs")
    if kind == "mcs":
        return mcs_rule(market, pi)
    if kind == "merton":
        if prefs is None:
            raise ConfigError("the Merton rule needs a [preferences] table", "rule.kind")
        return merton_rule(market, prefs)[1]
    if kind == "annuity":
        return annuity_certain_rule(market)
    if kind == "linear-drain":
        return linear_drain_rule(market.T)
    raise ConfigError(f"unknown rule kind {kind!r}", "rule.kind")


def build_sim_config(raw, seed=None, paths=None, steps=None):
    s = _table(raw, "simulation", required=False)
    known = {"x0", "steps", "paths", "seed", "scheme", "report_times", "antithetic", "batch_size", "vol_window"}
    extra = set(s) - known
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}", "simulation")
    kw = dict(
        x0=_num(s, "x0", "simulation", 1.0),
        steps=steps if steps is not None else _int(s, "steps", "simulation", 1000),
        paths=paths if paths is not None else _int(s, "paths", "simulation", 10_000),
        master_seed=seed if seed is not None else _int(s, "seed", "simulation", 0),
        scheme=s.get("scheme", "exact-lognormal"),
        antithetic=bool(s.get("antithetic", True)),
        vol_window=_int(s, "vol_window", "simulation", 0),
    )
    kw["batch_size"] = _int(s, "batch_size", "simulation", min(10_000, kw["paths"] + kw["paths"] % 2))
    if "report_times" in s:
        kw["report_times"] = tuple(float(t) for t in s["report_times"])
    return SimConfig(**kw)


@dataclass(frozen=True)
class PdeSettings:
    n_t: int = 401
    n_r: int = 401
    width: float = 6.0
    r_min: float = None
    r_max: float = None
    theta: float = 0.5
    rannacher: int = 0
    tol: float = 1e-10
    max_iter: int = 50

    def grid(self, market):
        from .pde import Grid2D

        if self.r_min is not None or self.r_max is not None:
            if self.r_min is None or self.r_max is None:
                raise ConfigError("give both r_min and r_max", "pde")
            return Grid2D(market.T, self.n_t, self.n_r, self.r_min, self.r_max)
        return Grid2D.for_market(market, self.n_t, self.n_r, self.width)


def build_pde_settings(raw):
    p = _table(raw, "pde", required=False)
    kw = {}
    for key in ("n_t", "n_r", "rannacher", "max_iter"):
        if key in p:
            kw[key] = _int(p, key, "pde")
    for key in ("width", "r_min", "r_max", "theta", "tol"):
        if key in p:
            kw[key] = _num(p, key, "pde")
    extra = set(p) - set(PdeSettings.__dataclass_fields__)
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}", "pde")
    return PdeSettings(**kw)


def build_tree(raw):
    t = _table(raw, "tree")
    kind = t.get("kind", "nested")
    try:
        if kind == "fixed-rate":
            return fixed_rate_tree(_num(t, "r", "tree"), _int(t, "periods", "tree"))
        if kind == "iid":
            rets, probs = t.get("returns"), t.get("probabilities")
            if not isinstance(rets, list) or not isinstance(probs, list) or len(rets) != len(probs):
                raise ConfigError("need equal-length lists 'returns' and 'probabilities'", "tree")
            return iid_tree([float(x) for x in rets], [float(x) for x in probs], _int(t, "periods", "tree"))
        if kind == "dependent":
            return dependent_tree()
        if kind == "nested":
            if not isinstance(t.get("children"), list):
                raise ConfigError("nested trees need a 'children' list", "tree.children")
            return ScenarioTree.from_nested(t["children"])
    except ConfigError as exc:
        if exc.key_path is None:
            raise ConfigError(str(exc), "tree") from None
        raise
    raise ConfigError(f"unknown tree kind {kind!r}", "tree.kind")


@dataclass(frozen=True)
class ExperimentSpec:
    """A resolved experiment: the raw mapping plus run-level overrides."""

    command: str
    raw: dict = field(default_factory=dict)
    out: str = "out"
    seed: int = None
    paths: int = None
    steps: int = None
    refine: int = 0
    assert_martingale: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}", "command")

    @property
    def hash(self):
        return spec_hash({
            "command": self.command, "spec": self.raw, "seed": self.seed,
            "paths": self.paths, "steps": self.steps, "refine": self.refine,
        })


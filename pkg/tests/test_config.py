import numpy as np
import pytest

from mcslab.config import (
    ExperimentSpec,
    build_market,
    build_pde_settings,
    build_preferences,
    build_rule,
    build_sim_config,
    build_strategy,
    build_tree,
    load_toml,
    spec_hash,
)
from mcslab.errors import ConfigError
from mcslab.market import DeterministicMarket, VasicekMarket
from mcslab.strategies import martingale_beta


def test_deterministic_market_from_lambda():
    m = build_market({"market": {"T": 20.0, "r": 0.02, "sigma": 0.2, "lambda": 0.25}})
    assert isinstance(m, DeterministicMarket)
    assert m.alpha[0](3.0) == pytest.approx(0.07)


def test_deterministic_market_from_alpha_matrix():
    m = build_market({"market": {"T": 5.0, "r": 0.01, "sigma": [[0.2, 0.0], [0.05, 0.3]], "alpha": [0.05, 0.08]}})
    assert m.n == 2


def test_riskless_market():
    m = build_market({"market": {"T": 20.0, "r": 0.03}})
    assert m.n == 0


def test_market_errors_name_the_key():
    with pytest.raises(ConfigError) as exc:
        build_market({"market": {"kind": "vasicek", "kappa": 0.5, "sigma_r": 0.01, "r0": 0.03, "T": 20.0}})
    assert exc.value.key_path == "market.theta"
    with pytest.raises(ConfigError) as exc:
        build_market({"market": {"kind": "heston"}})
    assert exc.value.key_path == "market.kind"
    with pytest.raises(ConfigError) as exc:
        build_market({"market": {"T": 20.0, "r": "high"}})
    assert exc.value.key_path == "market.r"
    with pytest.raises(ConfigError, match="either"):
        build_market({"market": {"T": 1.0, "r": 0.0, "sigma": 0.2, "lambda": 0.1, "alpha": 0.05}})
    with pytest.raises(ConfigError) as exc:
        build_market({})
    assert exc.value.key_path == "market"


def test_vasicek_market_and_strategy():
    raw = {
        "market": {"kind": "vasicek", "kappa": 0.5, "theta": 0.03, "sigma_r": 0.01, "r0": 0.03, "T": 20.0,
                   "lambda2": 0.3, "sigma21": 0.02},
        "strategy": {"pi1": 0.2, "pi2": {"kind": "affine", "t0": 0.0, "start": 0.6, "t1": 20.0, "end": 0.1}},
    }
    m = build_market(raw)
    assert isinstance(m, VasicekMarket)
    pi = build_strategy(raw, m)
    e1, e2 = pi.exposures(m, 10.0, 0.03)
    assert float(e2) == pytest.approx(0.35 * 0.2)
    assert build_strategy({"strategy": {"kind": "hedge"}}, m) is None


def test_preferences_and_rules():
    raw = {"market": {"T": 20.0, "r": 0.02, "sigma": 0.2, "lambda": 0.3}, "preferences": {"gamma": 2.0}}
    m = build_market(raw)
    prefs = build_preferences(raw, m)
    assert prefs.beta(4.0) == pytest.approx(martingale_beta(m, 2.0, 4.0))
    assert build_preferences({"preferences": {"gamma": 2.0, "beta": "r"}}, m).beta(1.0) == pytest.approx(0.02)
    assert build_preferences({}, m) is None
    pi = build_strategy({"strategy": {"kind": "merton"}}, m, prefs)
    assert pi.weights[0](0.0) == pytest.approx(0.3 / (0.2 * 2.0))
    assert build_rule({"rule": {"kind": "merton"}}, m, pi, prefs).kind == "merton"
    assert build_rule({"rule": {"kind": "annuity"}}, m, pi).kind == "annuity-certain"
    with pytest.raises(ConfigError, match="preferences"):
        build_rule({"rule": {"kind": "merton"}}, m, pi)
    with pytest.raises(ConfigError):
        build_rule({"rule": {"kind": "greedy"}}, m, pi)
    with pytest.raises(ConfigError) as exc:
        build_strategy({"strategy": {"weights": [0.1, 0.2]}}, m)
    assert exc.value.key_path == "strategy.weights"


def test_sim_config_overrides():
    raw = {"simulation": {"steps": 100, "paths": 8, "seed": 3}}
    cfg = build_sim_config(raw)
    assert (cfg.steps, cfg.paths, cfg.master_seed, cfg.batch_size) == (100, 8, 3, 8)
    with pytest.raises(ConfigError, match="even"):
        build_sim_config(raw, paths=7)
    assert build_sim_config({"simulation": {"antithetic": False}}, paths=7).paths == 7
    cfg = build_sim_config(raw, seed=9, paths=20, steps=50)
    assert (cfg.steps, cfg.paths, cfg.master_seed) == (50, 20, 9)
    with pytest.raises(ConfigError, match="unknown keys"):
        build_sim_config({"simulation": {"step": 10}})
    with pytest.raises(ConfigError) as exc:
        build_sim_config({"simulation": {"steps": 10.5}})
    assert exc.value.key_path == "simulation.steps"


def test_pde_settings():
    s = build_pde_settings({"pde": {"n_t": 51, "n_r": 41, "r_min": -0.05, "r_max": 0.1}})
    assert (s.n_t, s.n_r, s.theta) == (51, 41, 0.5)
    m = VasicekMarket(kappa=0.5, theta=0.03, sigma_r=0.01, r0=0.03, T=20.0)
    g = s.grid(m)
    assert (g.r_min, g.r_max, g.n_r) == (-0.05, 0.1, 41)
    assert build_pde_settings({}).n_t == 401
    with pytest.raises(ConfigError):
        build_pde_settings({"pde": {"nt": 3}})
    with pytest.raises(ConfigError):
        build_pde_settings({"pde": {"r_min": 0.0}}).grid(m)


def test_trees():
    assert build_tree({"tree": {"kind": "fixed-rate", "r": 0.0, "periods": 3}}).n == 3
    t = build_tree({"tree": {"kind": "iid", "returns": [0.1, -0.1], "probabilities": [0.5, 0.5], "periods": 2}})
    assert t.size == 7
    assert build_tree({"tree": {"kind": "dependent"}}).n == 3
    with pytest.raises(ConfigError):
        build_tree({"tree": {"kind": "iid", "returns": [0.1], "probabilities": [0.5, 0.5], "periods": 2}})
    with pytest.raises(ConfigError) as exc:
        build_tree({"tree": {"kind": "nested"}})
    assert exc.value.key_path == "tree.children"
    with pytest.raises(ConfigError) as exc:
        build_tree({"tree": {"kind": "bushy"}})
    assert exc.value.key_path == "tree.kind"


def test_shipped_configs_resolve(tmp_path):
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "configs"
    for path in sorted(root.glob("*.toml")):
        raw = load_toml(path)
        if "tree" in raw:
            build_tree(raw)
            continue
        m = build_market(raw)
        build_strategy(raw, m, build_preferences(raw, m))
        build_sim_config(raw)


def test_load_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[market\n")
    with pytest.raises(ConfigError) as exc:
        load_toml(bad)
    assert exc.value.key_path == "--config"
    with pytest.raises(ConfigError):
        load_toml(tmp_path / "missing.toml")


def test_spec_hash_is_canonical():
    assert spec_hash({"a": 1, "b": [1, 2]}) == spec_hash({"b": [1, 2], "a": 1})
    assert spec_hash({"a": 1}) != spec_hash({"a": 2})
    s1 = ExperimentSpec("simulate", {"x": 1}, seed=1)
    s2 = ExperimentSpec("simulate", {"x": 1}, seed=2, out="elsewhere")
    assert s1.hash != s2.hash
    assert ExperimentSpec("simulate", {"x": 1}, seed=1, out="elsewhere").hash == s1.hash
    with pytest.raises(ConfigError):
        ExperimentSpec("plot")

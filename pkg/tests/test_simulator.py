import numpy as np
import pytest

from mcslab.annuity import constant_rate_factor
from mcslab.errors import ConfigError, RuleError
from mcslab.market import DeterministicMarket, VasicekMarket
from mcslab.pde import Grid2D, hedge_strategy, solve_annuity_pde, solve_mcs_pde
from mcslab.simulator import (
    SimConfig,
    exhaustion_check,
    martingale_test,
    predicted_consumption_variance,
    simulate,
    vol_check,
)
from mcslab.strategies import (
    CrraPreferences,
    DeterministicFactorRule,
    SurfaceRule,
    constant_strategy,
    linear_drain_rule,
    mcs_rule,
    merton_rule,
    rate_strategy,
)


def test_config_validation():
    with pytest.raises(ConfigError, match="simulation.steps"):
        SimConfig(steps=1)
    with pytest.raises(ConfigError, match="simulation.paths"):
        SimConfig(paths=0)
    with pytest.raises(ConfigError, match="simulation.x0"):
        SimConfig(x0=0.0)
    with pytest.raises(ConfigError, match="simulation.scheme"):
        SimConfig(scheme="milstein")
    with pytest.raises(ConfigError, match="report time"):
        SimConfig(steps=100, report_times=(0.123,)).report_indices(20.0)


def test_default_report_times():
    idx = SimConfig(steps=1000).report_indices(20.0)
    assert idx.tolist() == [100, 200, 300, 400, 500, 600, 700, 800, 900, 999]
    assert SimConfig(steps=1000, report_times=(10.0, 20.0)).report_indices(20.0).tolist() == [500, 999]


def test_riskless_consumption_is_constant():
    m = DeterministicMarket(20.0, 0.03, (), ())
    pi = constant_strategy()
    cfg = SimConfig(steps=1000, paths=100)
    b = simulate(m, pi, mcs_rule(m, pi), cfg)
    c0 = 1.0 / constant_rate_factor(0.03, 20.0)
    assert np.max(np.abs(b.c - c0)) <= 1e-9
    assert b.X[-1].max() <= 2 * b.dt / 20.0


def test_linear_drain():
    m = DeterministicMarket(10.0, 0.0, (), ())
    cfg = SimConfig(steps=200, paths=10)
    b = simulate(m, constant_strategy(), linear_drain_rule(10.0), cfg)
    np.testing.assert_allclose(b.X, (1 - b.times / 10.0)[:, None] * np.ones((1, 10)), atol=1e-14)
    np.testing.assert_allclose(b.c, 0.1, atol=1e-14)
    assert exhaustion_check(b).raw_max == pytest.approx(b.dt / 10.0, abs=1e-14)
    rep = martingale_test(b, cfg)
    assert np.all(rep.z == 0.0)


def test_log_wealth_moments(one_stock):
    pi = constant_strategy(0.6)
    cfg = SimConfig(steps=100, paths=100_000, master_seed=3, report_times=(20.0,))
    b = simulate(one_stock, pi, mcs_rule(one_stock, pi), cfg)
    t = b.times[-1]
    ly = b.logY[-1]
    assert ly.mean() == pytest.approx((0.02 + 0.6 * 0.2 * 0.25 - 0.5 * 0.12**2) * t, abs=1e-12)
    dev2 = (ly - ly.mean()) ** 2
    pair = 0.5 * (dev2[: dev2.size // 2] + dev2[dev2.size // 2:])
    se = pair.std(ddof=1) / np.sqrt(pair.size)
    assert abs(pair.mean() - 0.12**2 * t) <= 3 * se


def test_seed_determinism(one_stock):
    pi = constant_strategy(0.6)
    cfg = SimConfig(steps=300, paths=2000, master_seed=99, batch_size=500)
    a = simulate(one_stock, pi, mcs_rule(one_stock, pi), cfg)
    b = simulate(one_stock, pi, mcs_rule(one_stock, pi), cfg)
    np.testing.assert_array_equal(a.c, b.c)
    np.testing.assert_array_equal(a.X, b.X)
    other = simulate(one_stock, pi, mcs_rule(one_stock, pi), SimConfig(steps=300, paths=2000, master_seed=100, batch_size=500))
    assert not np.array_equal(a.c, other.c)


def test_antithetic_pairs(one_stock):
    pi = constant_strategy(0.6)
    cfg = SimConfig(steps=50, paths=1000, batch_size=200, keep_noise=True)
    b = simulate(one_stock, pi, mcs_rule(one_stock, pi), cfg)
    np.testing.assert_array_equal(b.noise[:, :, :500], -b.noise[:, :, 500:])


def test_mcs_is_martingale(one_stock):
    pi = constant_strategy(0.6)
    cfg = SimConfig(steps=500, paths=50_000, master_seed=1)
    rep = martingale_test(simulate(one_stock, pi, mcs_rule(one_stock, pi), cfg), cfg)
    assert rep.passes(conditional=True)
    assert np.all(rep.se > 0)


def test_merton_with_beta_r_is_submartingale():
    m = DeterministicMarket.from_lambda(20.0, 0.02, 0.2, 0.3)
    pi, rule = merton_rule(m, CrraPreferences(1.0, 0.02))
    cfg = SimConfig(steps=200, paths=100_000, master_seed=5, report_times=(10.0,))
    rep = martingale_test(simulate(m, pi, rule, cfg), cfg)
    assert rep.z[0] > 3
    assert rep.drift[0] == pytest.approx(0.09, abs=0.01)


def test_exhaustion_first_order(one_stock):
    pi = constant_strategy(0.6)
    stats = []
    for steps in (2500, 5000, 10_000):
        cfg = SimConfig(steps=steps, paths=1000, master_seed=2)
        stats.append(exhaustion_check(simulate(one_stock, pi, mcs_rule(one_stock, pi), cfg)))
    assert stats[-1].deflated_max <= 2e-4
    for a, b in zip(stats[:-1], stats[1:]):
        assert 1.7 <= a.deflated_max / b.deflated_max <= 2.3
    assert stats[-1].budget_gap <= 2e-4


def test_scheme_equivalence(one_stock):
    pi = constant_strategy(0.6)
    rule = mcs_rule(one_stock, pi)
    out = {}
    for scheme in ("exact-lognormal", "euler"):
        cfg = SimConfig(steps=2000, paths=100_000, master_seed=8, scheme=scheme, report_times=(10.0,))
        out[scheme] = simulate(one_stock, pi, rule, cfg).c[-1]
    a, b = out["exact-lognormal"], out["euler"]
    se = np.sqrt(a.var() / a.size + b.var() / b.size)
    assert abs(a.mean() - b.mean()) <= 3 * se


def test_overflowing_factor_rejected(one_stock):
    rule = DeterministicFactorRule(-1000.0, 20.0, "merton")
    with pytest.raises(RuleError), np.errstate(over="ignore"):
        simulate(one_stock, constant_strategy(0.6), rule, SimConfig(steps=100, paths=10))


def test_strategy_market_mismatch(one_stock, vasicek):
    with pytest.raises(ConfigError):
        simulate(one_stock, constant_strategy(0.6, 0.1), mcs_rule(one_stock, constant_strategy(0.6)), SimConfig(paths=10))
    with pytest.raises(ConfigError):
        simulate(vasicek, constant_strategy(0.6), linear_drain_rule(20.0), SimConfig(paths=10))


def test_positivity_under_short_rate(vasicek, glide_path):
    surf = solve_mcs_pde(vasicek, glide_path, Grid2D.for_market(vasicek, 101, 101))
    b = simulate(vasicek, glide_path, SurfaceRule(surf), SimConfig(steps=400, paths=2000))
    assert np.all(b.X > 0) and np.all(b.c > 0)
    assert b.n_clamped == 0


def test_short_rate_seed_determinism(vasicek, glide_path):
    surf = solve_mcs_pde(vasicek, glide_path, Grid2D.for_market(vasicek, 51, 51))
    cfg = SimConfig(steps=200, paths=1000, master_seed=4, vol_window=10)
    a = simulate(vasicek, glide_path, SurfaceRule(surf), cfg)
    b = simulate(vasicek, glide_path, SurfaceRule(surf), cfg)
    np.testing.assert_array_equal(a.c, b.c)
    np.testing.assert_array_equal(a.qv, b.qv)


def test_hedged_annuity_has_no_consumption_volatility(hedge_market):
    abar = solve_annuity_pde(hedge_market, Grid2D.for_market(hedge_market, 201, 201))
    pi = hedge_strategy(hedge_market, abar)
    cfg = SimConfig(steps=2000, paths=2000, vol_window=20)
    b = simulate(hedge_market, pi, SurfaceRule(abar), cfg)
    vt = vol_check(b, hedge_market, pi, abar)
    assert np.max(vt.realized) <= 1e-6
    assert np.max(vt.predicted) <= 1e-6
    assert vt.passes()


def test_deterministic_rate_volatility():
    m = VasicekMarket(kappa=0.5, theta=0.03, sigma_r=0.0, r0=0.03, T=20.0, lambda2=0.3, sigma22=0.18)
    pi = rate_strategy(0.0, 0.4)
    surf = solve_mcs_pde(m, pi, Grid2D.for_market(m, 201, 21))
    cfg = SimConfig(steps=2000, paths=20_000, vol_window=20)
    b = simulate(m, pi, SurfaceRule(surf), cfg)
    vt = vol_check(b, m, pi, surf)
    np.testing.assert_allclose(np.sqrt(vt.predicted), 0.072, rtol=1e-12)
    assert vt.passes(rel_tol=0.05)


def test_zero_strategy_predicts_no_volatility(vasicek):
    assert predicted_consumption_variance(vasicek, rate_strategy(0.0, 0.0), None, 3.0, 0.03) == 0.0


def test_vol_check_needs_windows(one_stock):
    pi = constant_strategy(0.6)
    b = simulate(one_stock, pi, mcs_rule(one_stock, pi), SimConfig(steps=100, paths=10))
    with pytest.raises(ConfigError):
        vol_check(b, one_stock, pi)

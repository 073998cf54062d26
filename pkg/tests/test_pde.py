import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcslab.annuity import average_loading_ansatz, constant_loading_ansatz, constant_rate_factor
from mcslab.curves import Affine
from mcslab.errors import InvalidGridError, SpanningError
from mcslab.market import DeterministicMarket, VasicekMarket
from mcslab.pde import (
    FactorSurface,
    Grid2D,
    alpha_c_table,
    closed_form_surface,
    convergence_study,
    hedge_strategy,
    self_convergence_study,
    simplified_pde_residual,
    solve_annuity_pde,
    solve_mcs_pde,
    vasicek_annuity_closed_form,
    vasicek_bond_price,
)
from mcslab.strategies import InvestmentStrategy, mcs_factor, rate_strategy

# closed-form values for kappa=0.5, theta=0.03, sigma_r=0.01, lambda1=0.1, T=20
ABAR_0_003 = 14.842733185166084
ABAR_10_005 = 8.324935573710206
BOND_5_003 = 0.8556755375750766


def _bond(kappa, theta, s, l1, tau, r):
    B = (1 - np.exp(-kappa * tau)) / kappa
    thq = theta + l1 * s / kappa
    A = (thq - s * s / (2 * kappa**2)) * (B - tau) - s * s * B * B / (4 * kappa)
    return np.exp(A - B * r)


def test_bond_price_matches_textbook_formula(hedge_market):
    for tau in (0.5, 5.0, 19.0):
        for r in (-0.01, 0.03, 0.08):
            assert vasicek_bond_price(hedge_market, tau, r) == pytest.approx(_bond(0.5, 0.03, 0.01, 0.1, tau, r), rel=1e-14)
    assert vasicek_bond_price(hedge_market, 5.0, 0.03) == pytest.approx(BOND_5_003, rel=1e-14)


def test_closed_form_annuity_values(hedge_market):
    assert vasicek_annuity_closed_form(hedge_market, 0.0, 0.03) == pytest.approx(ABAR_0_003, rel=1e-13)
    assert vasicek_annuity_closed_form(hedge_market, 10.0, 0.05) == pytest.approx(ABAR_10_005, rel=1e-13)
    assert vasicek_annuity_closed_form(hedge_market, 20.0, 0.05) == 0.0


def test_zero_kappa_bond(hedge_market):
    m = VasicekMarket(kappa=0.0, theta=0.0, sigma_r=0.01, r0=0.03, T=20.0)
    # r is Brownian: log P = -tau r + sigma^2 tau^3 / 6
    assert vasicek_bond_price(m, 4.0, 0.03) == pytest.approx(np.exp(-0.12 + 1e-4 * 64 / 6), rel=1e-14)


def test_grid_validation(hedge_market):
    with pytest.raises(InvalidGridError):
        Grid2D(20.0, 101, 101, 0.03, 0.03)
    with pytest.raises(InvalidGridError):
        Grid2D(20.0, 2, 101, 0.0, 0.1)
    with pytest.raises(InvalidGridError):
        solve_annuity_pde(hedge_market, Grid2D(10.0, 11, 11, 0.0, 0.1))
    g = Grid2D.for_market(hedge_market, 11, 11)
    assert g.r_min < hedge_market.r0 < g.r_max
    assert g.refined().n_t == 21 and g.refined().dr == pytest.approx(g.dr / 2)


def test_zero_volatility_annuity_is_annuity_certain():
    m = VasicekMarket(kappa=0.0, theta=0.0, sigma_r=0.0, r0=0.03, T=15.0)
    g = Grid2D(15.0, 1501, 11, 0.0, 0.1)
    ab = solve_annuity_pde(m, g)
    exact = np.array([[constant_rate_factor(r, 15.0 - t) for r in g.r_nodes] for t in g.t_nodes])
    np.testing.assert_allclose(ab.values, exact, rtol=1e-7, atol=1e-12)


def test_annuity_pde_matches_closed_form(hedge_market):
    g = Grid2D.for_market(hedge_market, 201, 201)
    ab = solve_annuity_pde(hedge_market, g)
    ref = closed_form_surface(hedge_market, g)
    live = g.t_nodes < 20.0
    assert np.max(np.abs(ab.values[live] / ref.values[live] - 1)) <= 1e-3
    assert ab(0.0, 0.03) == pytest.approx(ABAR_0_003, rel=1e-4)
    assert np.all(ab.values[-1] == 0.0)


def test_annuity_second_order(hedge_market):
    rows = convergence_study(hedge_market, Grid2D.for_market(hedge_market, 51, 51), levels=3)
    assert all(3.0 <= row.ratio <= 5.0 for row in rows[1:])


def test_surface_shape_properties(vasicek, glide_path):
    s = solve_mcs_pde(vasicek, glide_path, Grid2D.for_market(vasicek, 101, 101))
    assert np.all(s.values[:-1] > 0)
    assert np.all(s.values[-1] == 0)
    # higher rates make the consumption annuity cheaper
    assert np.all(np.diff(s.values[:-1], axis=1) < 0)
    assert np.all(s.picard_iterations[:-1] >= 1)
    assert s.q_table()[-1].tolist() == [1.0] * 101


def test_short_horizon(vasicek):
    m = VasicekMarket(kappa=0.5, theta=0.03, sigma_r=0.01, r0=0.03, T=1e-3, lambda1=0.1, lambda2=0.3)
    s = solve_mcs_pde(m, rate_strategy(0.2, 0.4), Grid2D.for_market(m, 3, 21))
    np.testing.assert_allclose(s.values[1], 5e-4, rtol=1e-4)
    np.testing.assert_allclose(s.values[0], 1e-3, rtol=1e-4)


def test_zero_rate_volatility_gives_deterministic_factor():
    m = VasicekMarket(kappa=0.5, theta=0.03, sigma_r=0.0, r0=0.03, T=10.0, lambda2=0.3, sigma22=0.2)
    glide = Affine.between(0.0, 0.6, 10.0, 0.1)
    s = solve_mcs_pde(m, rate_strategy(0.0, glide), Grid2D(10.0, 1001, 11, 0.029, 0.031))
    # at r = theta the rate stays put, so the stock-only market is deterministic
    dm = DeterministicMarket.from_lambda(10.0, 0.03, 0.2, 0.3)
    det = [mcs_factor(dm, InvestmentStrategy((glide,)), t) for t in (0.0, 5.0, 9.0)]
    np.testing.assert_allclose(s.values[[0, 500, 900], 5], det, rtol=1e-6)


def test_hedge_strategy_against_closed_form_duration():
    m = VasicekMarket(kappa=0.5, theta=0.03, sigma_r=0.01, r0=0.03, T=20.0, lambda1=0.0)
    ab = solve_annuity_pde(m, Grid2D.for_market(m, 201, 201))
    pi = hedge_strategy(m, ab)
    h = 1e-5
    cf = lambda r: vasicek_annuity_closed_form(m, 0.0, r)
    D = -(cf(0.03 + h) - cf(0.03 - h)) / (2 * h) / cf(0.03)
    e1, e2 = pi.exposures(m, 0.0, 0.03)
    assert float(e1) / m.sigma_r == pytest.approx(D, rel=1e-2)
    assert float(e2) == 0.0
    # bounded near the horizon
    tt = ab.t_nodes[-5:]
    e1_end, _ = pi.exposures(m, tt[:, None], ab.r_nodes[None, :])
    assert np.all(np.isfinite(e1_end)) and np.max(np.abs(e1_end)) < 1.0


def test_hedge_vanishes_without_rate_risk():
    m = VasicekMarket(kappa=0.5, theta=0.03, sigma_r=1e-8, r0=0.03, T=20.0, sigma11=0.05)
    ab = solve_annuity_pde(m, Grid2D.for_market(m, 41, 11))
    e1, _ = hedge_strategy(m, ab).exposures(m, 0.0, 0.03)
    assert abs(float(e1)) < 1e-6


def test_hedge_needs_spanning():
    m = VasicekMarket(kappa=0.5, theta=0.03, sigma_r=0.01, r0=0.03, T=20.0, sigma11=0.0)
    ab = solve_annuity_pde(m, Grid2D.for_market(m, 21, 11))
    with pytest.raises(SpanningError):
        hedge_strategy(m, ab)


def test_hedged_martingale_surface_is_annuity(hedge_market):
    g = Grid2D.for_market(hedge_market, 201, 201)
    ab = solve_annuity_pde(hedge_market, g)
    pi = hedge_strategy(hedge_market, ab)
    s = solve_mcs_pde(hedge_market, pi, g)
    live = g.t_nodes < 20.0
    ref = closed_form_surface(hedge_market, g).values
    assert np.max(np.abs(s.values[live] / ref[live] - 1)) <= 1e-3
    assert np.max(np.abs(alpha_c_table(ab, hedge_market, pi))) <= 1e-3


def test_alpha_c_contract(vasicek, glide_path):
    s = solve_mcs_pde(vasicek, glide_path, Grid2D.for_market(vasicek, 401, 401))
    tab = alpha_c_table(s, vasicek, glide_path)
    assert tab.shape == (399, 399)
    assert np.max(np.abs(tab)) <= 1e-4


def test_alpha_c_perturbation(vasicek, glide_path):
    s = solve_mcs_pde(vasicek, glide_path, Grid2D.for_market(vasicek, 101, 101))
    bumped = FactorSurface(s.t_nodes, s.r_nodes, 1.01 * s.values)
    base = alpha_c_table(s, vasicek, glide_path)
    shift = alpha_c_table(bumped, vasicek, glide_path) - base
    # (1 - q) / tau is the only term not homogeneous in a; the last row also sees q(T) = 1
    expected = 0.01 / (1.01 * s.values[1:-1, 1:-1])
    np.testing.assert_allclose(shift[:-1], expected[:-1], rtol=1e-8)


def test_self_convergence(vasicek, glide_path):
    rows = self_convergence_study(vasicek, glide_path, Grid2D.for_market(vasicek, 51, 51), levels=3)
    assert np.isnan(rows[0].max_rel_error)
    assert rows[2].max_rel_error < rows[1].max_rel_error / 2.5


def test_simplified_residual_vanishes_in_degenerate_market():
    m = VasicekMarket(kappa=0.0, theta=0.03, sigma_r=0.0, r0=0.03, T=10.0, lambda2=0.3, sigma22=0.2)
    pi = rate_strategy(0.0, 0.5)
    ansatz = constant_loading_ansatz(0.5 * 0.2 * 0.3)
    for t, r in ((0.0, 0.03), (2.0, 0.05), (9.0, -0.01)):
        assert abs(simplified_pde_residual(ansatz, m, pi, t, r)) <= 1e-6


def test_simplified_residual_naive_ansatz(vasicek):
    pi = rate_strategy(0.2, 0.4)
    ansatz = average_loading_ansatz(0.5)
    vals = [simplified_pde_residual(ansatz, vasicek, pi, 5.0, 0.03, dr=dr) for dr in (2e-3, 1e-3, 5e-4)]
    assert abs(vals[0]) > 1e-2
    assert vals[1] == pytest.approx(vals[0], rel=1e-2)
    assert vals[2] == pytest.approx(vals[1], rel=1e-2)


@settings(max_examples=15)
@given(
    kappa=st.floats(0.1, 1.0),
    sigma_r=st.floats(0.002, 0.02),
    l1=st.floats(-0.3, 0.3),
)
def test_annuity_pde_random_markets(kappa, sigma_r, l1):
    m = VasicekMarket(kappa=kappa, theta=0.03, sigma_r=sigma_r, r0=0.03, T=10.0, lambda1=l1)
    g = Grid2D.for_market(m, 101, 61)
    ab = solve_annuity_pde(m, g)
    ref = closed_form_surface(m, g).values
    live = g.t_nodes < 10.0
    assert np.all(ab.values[live] > 0)
    assert np.max(np.abs(ab.values[live] / ref[live] - 1)) <= 5e-3

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcslab.discrete import (
    ScenarioTree,
    annuity_factor_discrete,
    candidate_factor,
    dependent_tree,
    fixed_rate_tree,
    iid_tree,
    martingale_verify,
    random_tree,
    solve_recursion,
    wealth_and_consumption,
)
from mcslab.errors import ConfigError, DegenerateReturnError

seeds = st.integers(0, 2**32 - 1)


def test_zero_rate_factors_count_remaining_periods():
    tree = fixed_rate_tree(0.0, 3)
    f = solve_recursion(tree)
    assert [a for _, _, a in f.rows()] == [3.0, 2.0, 1.0]
    X, C = wealth_and_consumption(f)
    np.testing.assert_allclose(C[1:], 1 / 3, rtol=1e-15)
    assert X[-1] == pytest.approx(0.0, abs=1e-16)


def test_fixed_rate_factor():
    f = solve_recursion(fixed_rate_tree(0.1, 2))
    assert f.a[1] == pytest.approx(1.9090909090909092, rel=1e-15)
    assert f.a[1] == pytest.approx(annuity_factor_discrete(0.1, 1, 2), rel=1e-15)
    for n in (1, 4, 7):
        a = solve_recursion(fixed_rate_tree(0.05, n)).a
        for i in range(1, n + 1):
            assert a[i] == pytest.approx(annuity_factor_discrete(0.05, i, n), rel=1e-14)


def test_single_period_consumes_everything():
    tree = iid_tree([0.1, -0.2], [0.3, 0.7], 1)
    f = solve_recursion(tree)
    assert np.all(f.a[1:] == 1.0)
    v = martingale_verify(tree, f)
    assert v.violation == 0.0 and v.exhaustion == 0.0


def test_dependent_tree_counterexample():
    tree = dependent_tree()
    rec = solve_recursion(tree)
    cand = candidate_factor(tree)
    assert np.nanmax(np.abs(rec.a - cand.a)) > 1e-3
    assert martingale_verify(tree, cand).violation > 1e-3
    assert martingale_verify(tree, rec).violation <= 1e-13
    # the last two periods agree: one step ahead there is nothing to be dependent on
    np.testing.assert_array_equal(rec.a[tree.nodes_at(3)], cand.a[tree.nodes_at(3)])


def test_degenerate_returns():
    tree = iid_tree([-0.5, 0.0], [0.5, 0.5], 2)
    assert solve_recursion(tree).a[1] > 0
    bad = ScenarioTree.from_nested([{"return": 0.0, "probability": 1.0, "children": [
        {"return": -0.9999999999999999, "probability": 1.0}]}])
    assert solve_recursion(bad).a[1] > 1e15
    with pytest.raises(ConfigError):
        iid_tree([-1.0], [1.0], 2)


def test_zero_expectation_raises():
    tree = fixed_rate_tree(0.0, 2)
    object.__setattr__(tree, "ret", np.array([np.nan, 0.0, -1.0]))
    with pytest.raises(DegenerateReturnError):
        solve_recursion(tree)
    with pytest.raises(DegenerateReturnError):
        candidate_factor(tree)


def test_validation_errors():
    with pytest.raises(ConfigError, match="sum"):
        iid_tree([0.1, 0.2], [0.5, 0.6], 2)
    with pytest.raises(ConfigError):
        iid_tree([0.1], [0.0], 2)
    with pytest.raises(ConfigError, match="tree"):
        ScenarioTree.from_nested([{"return": 0.1}])
    with pytest.raises(ConfigError, match="leaf"):
        ScenarioTree.from_nested([
            {"return": 0.1, "probability": 0.5},
            {"return": 0.0, "probability": 0.5, "children": [{"return": 0.0, "probability": 1.0}]},
        ])
    with pytest.raises(ConfigError):
        fixed_rate_tree(0.0, 0)


def test_nested_round_trip():
    tree = dependent_tree()
    back = ScenarioTree.from_nested(tree.to_nested())
    np.testing.assert_array_equal(back.parent, tree.parent)
    np.testing.assert_array_equal(back.ret[1:], tree.ret[1:])
    np.testing.assert_array_equal(back.prob, tree.prob)
    assert back.children == tree.children


@settings(max_examples=200)
@given(seed=seeds)
def test_recursion_is_exact_on_random_trees(seed):
    tree = random_tree(np.random.default_rng(seed))
    f = solve_recursion(tree)
    v = martingale_verify(tree, f)
    assert v.violation <= 1e-13
    assert v.exhaustion == 0.0
    assert np.all(f.a[1:] >= 1.0)


@settings(max_examples=200)
@given(seed=seeds)
def test_candidate_matches_recursion_for_iid_returns(seed):
    tree = random_tree(np.random.default_rng(seed), iid=True)
    np.testing.assert_allclose(candidate_factor(tree).a[1:], solve_recursion(tree).a[1:], rtol=1e-12)


@settings(max_examples=50)
@given(seed=seeds, x0=st.floats(1e-3, 1e6))
def test_consumption_scales_with_wealth(seed, x0):
    tree = random_tree(np.random.default_rng(seed))
    f = solve_recursion(tree)
    _, c1 = wealth_and_consumption(f, 1.0)
    _, cx = wealth_and_consumption(f, x0)
    np.testing.assert_allclose(cx, x0 * c1, rtol=1e-13)

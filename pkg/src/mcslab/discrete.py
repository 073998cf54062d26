"""Martingale consumption on finite scenario trees.

Period ``i`` runs from ``t_{i-1}`` to ``t_i``; the return ``R_i`` is
revealed at ``t_i`` and consumption is

    C_i = X_{i-1} (1 + R_i) / a_i,    X_i = X_{i-1} (1 + R_i) - C_i,

with ``a_n = 1`` so that everything left is consumed at the end. The
consumption stream is a martingale exactly when

    a_i = 1 + 1 / E[(1 + R_{i+1}) / a_{i+1} | F_i].

Node identity plays the role of the information set, so conditional
expectations are finite sums over children and every claim can be checked
to rounding precision.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateReturnError

PROB_TOL = 1e-15


@dataclass(frozen=True)
class ScenarioTree:
    """Non-recombining tree stored flat in breadth-first order.

    Node 0 is the root at period 0 and carries no return. For every other
    node ``parent``, ``period``, ``ret`` (the return of the period ending at
    the node) and ``prob`` (conditional on the parent) are given.
    ``children[v]`` lists the children of ``v``.
    """

    parent: np.ndarray
    period: np.ndarray
    ret: np.ndarray
    prob: np.ndarray
    children: tuple

    @property
    def n(self):
        """Number of periods."""
        return int(self.period.max())

    @property
    def size(self):
        return self.parent.size

    def nodes_at(self, i):
        return np.flatnonzero(self.period == i)

    @property
    def leaves(self):
        return self.nodes_at(self.n)

    def validate(self):
        if self.size < 2:
            raise ConfigError("a tree needs at least one period", "tree")
        depth = None
        for v, kids in enumerate(self.children):
            if not kids:
                if depth is None:
                    depth = self.period[v]
                elif self.period[v] != depth:
                    raise ConfigError(f"leaf {v} at period {self.period[v]}, expected {depth}", "tree")
                continue
            p = self.prob[list(kids)]
            if np.any(p <= 0) or np.any(p > 1):
                raise ConfigError(f"branch probabilities of node {v} must lie in (0, 1]", "tree")
            if abs(math.fsum(p) - 1.0) > PROB_TOL:
                raise ConfigError(f"branch probabilities of node {v} sum to {math.fsum(p)!r}", "tree")
        if np.any(self.ret[1:] <= -1.0) or not np.all(np.isfinite(self.ret[1:])):
            raise ConfigError("returns must be finite and greater than -1", "tree")
        return self

    @classmethod
    def from_nested(cls, root_children):
        """Build from nested mappings ``{"return", "probability", "children"}``."""
        parent, period, ret, prob, children = [-1], [0], [np.nan], [1.0], [[]]
        queue = [(0, root_children)]
        while queue:
            v, kids = queue.pop(0)
            for k, spec in enumerate(kids or []):
                try:
                    r = float(spec["return"])
                    p = float(spec["probability"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise ConfigError(f"node needs numeric 'return' and 'probability' ({exc})", f"tree.node[{v}].children[{k}]")
                u = len(parent)
                parent.append(v)
                period.append(period[v] + 1)
                ret.append(r)
                prob.append(p)
                children.append([])
                children[v].append(u)
                queue.append((u, spec.get("children")))
        return cls(
            np.array(parent), np.array(period), np.array(ret), np.array(prob),
            tuple(tuple(c) for c in children),
        ).validate()

    def to_nested(self):
        def build(v):
            return [
                {"return": float(self.ret[u]), "probability": float(self.prob[u]), "children": build(u)}
                for u in self.children[v]
            ]

        return build(0)


@dataclass(frozen=True, eq=False)
class DiscreteFactorProcess:
    """Factor ``a`` per node; ``a[0]`` (the root) is NaN since nothing is consumed at the start."""

    tree: ScenarioTree
    a: np.ndarray
    method: str

    def rows(self):
        return [(v, int(self.tree.period[v]), float(self.a[v])) for v in range(1, self.tree.size)]


def markov_tree(n, branches):
    """Tree whose next-period branches depend on the current node.

    ``branches(period, node_return)`` returns ``(returns, probabilities)``
    for the children; ``node_return`` is NaN at the root.
    """
    if n < 1:
        raise ConfigError("a tree needs at least one period", "tree.periods")
    parent, period, ret, prob, children = [-1], [0], [np.nan], [1.0], [[]]
    frontier = [0]
    for i in range(1, n + 1):
        nxt = []
        for v in frontier:
            rs, ps = branches(i, ret[v])
            for r, p in zip(rs, ps):
                u = len(parent)
                parent.append(v)
                period.append(i)
                ret.append(float(r))
                prob.append(float(p))
                children.append([])
                children[v].append(u)
                nxt.append(u)
        frontier = nxt
    return ScenarioTree(
        np.array(parent), np.array(period), np.array(ret), np.array(prob),
        tuple(tuple(c) for c in children),
    ).validate()


def iid_tree(returns, probs, n):
    """Every period draws independently from the same distribution."""
    return markov_tree(n, lambda i, r: (returns, probs))


def fixed_rate_tree(r, n):
    return iid_tree([r], [1.0], n)


def dependent_tree():
    """Three-period counterexample with Markov-dependent returns.

    The first return is +20% or -10%. After an up move the next return is
    +30% or -10%, after a down move +10% or -20%, all branches
    equiprobable. Dependence between the second and third returns breaks
    the independent-returns formula for the first-period factor.
    """
    def branches(i, last):
        if i == 1:
            return (0.2, -0.1), (0.5, 0.5)
        if last > 0:
            return (0.3, -0.1), (0.5, 0.5)
        return (0.1, -0.2), (0.5, 0.5)

    return markov_tree(3, branches)


def _simplex(rng, k):
    p = rng.dirichlet(np.ones(k))
    p = np.maximum(p, 1e-3)
    p /= p.sum()
    p[-1] = 1.0 - math.fsum(p[:-1])
    return p


def random_tree(rng, max_periods=5, max_branches=4, iid=False, low=-0.5, high=0.6):
    """Random tree; ``iid=True`` uses one return distribution for all periods and nodes."""
    n = int(rng.integers(1, max_periods + 1))
    if iid:
        k = int(rng.integers(1, max_branches + 1))
        return iid_tree(rng.uniform(low, high, k), _simplex(rng, k), n)

    def branches(i, last):
        k = int(rng.integers(1, max_branches + 1))
        return rng.uniform(low, high, k), _simplex(rng, k)

    return markov_tree(n, branches)


def _expect(tree, v, values):
    kids = tree.children[v]
    return math.fsum(tree.prob[u] * values[u] for u in kids)


def solve_recursion(tree):
    """Exact backward induction for the martingale factor."""
    a = np.full(tree.size, np.nan)
    a[tree.leaves] = 1.0
    for i in range(tree.n - 1, 0, -1):
        for v in tree.nodes_at(i):
            e = math.fsum(tree.prob[u] * (1.0 + tree.ret[u]) / a[u] for u in tree.children[v])
            if e == 0.0:
                raise DegenerateReturnError(f"E[(1+R)/a | node {v}] vanished")
            a[v] = 1.0 + 1.0 / e
    return DiscreteFactorProcess(tree, a, "recursion")


def _gross_moments(tree, v):
    """``E[1 + R_k | node v]`` for the periods after ``v``."""
    out = []
    frontier = [(v, 1.0)]
    while True:
        nxt = [(u, w * tree.prob[u]) for x, w in frontier for u in tree.children[x]]
        if not nxt:
            return out
        out.append(math.fsum(w * (1.0 + tree.ret[u]) for u, w in nxt))
        frontier = nxt


def candidate_factor(tree):
    """``a_i = 1 + sum_j prod_{k=i+1}^j 1 / E[1 + R_k | F_i]``.

    Correct for independent returns, not in general.
    """
    a = np.full(tree.size, np.nan)
    for v in range(1, tree.size):
        moments = _gross_moments(tree, v)
        total, prod = [1.0], 1.0
        for m in moments:
            if m == 0.0:
                raise DegenerateReturnError(f"E[1+R | node {v}] vanished")
            prod /= m
            total.append(prod)
        a[v] = math.fsum(total)
    return DiscreteFactorProcess(tree, a, "candidate")


def annuity_factor_discrete(r, i, n):
    """Fixed-rate factor ``1 + sum_{j=i+1}^n (1+r)^{-(j-i)}``."""
    if r == 0:
        return float(n - i + 1)
    return ((1 + r) - (1 + r) ** (i - n)) / r


@dataclass(frozen=True)
class Verification:
    """``violation``: max over nodes of ``|E[C_{i+1} | F_i] - C_i|``;
    ``exhaustion``: max over leaves of ``|X_n|``."""

    violation: float
    exhaustion: float


def wealth_and_consumption(factors, x0=1.0):
    """Per-node wealth ``X`` and consumption ``C`` (both NaN-free, root X = x0, C = 0)."""
    tree, a = factors.tree, factors.a
    X = np.empty(tree.size)
    C = np.zeros(tree.size)
    X[0] = x0
    for v in range(1, tree.size):
        gross = X[tree.parent[v]] * (1.0 + tree.ret[v])
        C[v] = gross / a[v]
        X[v] = gross - C[v]
    return X, C


def martingale_verify(tree, factors, x0=1.0):
    if factors.tree is not tree and factors.tree.size != tree.size:
        raise ConfigError("factors belong to a different tree")
    if np.any(np.isnan(factors.a[1:])):
        raise ConfigError("factors missing at some nodes")
    X, C = wealth_and_consumption(factors, x0)
    worst = 0.0
    for i in range(1, tree.n):
        for v in tree.nodes_at(i):
            worst = max(worst, abs(_expect(tree, v, C) - C[v]))
    return Verification(float(worst), float(np.max(np.abs(X[tree.leaves]))))

"""Command-line experiment runner.

Each run writes CSV tables and a ``manifest.json`` into ``--out``. Every
CSV starts with a comment line carrying the spec hash and library versions;
floats are written with ``%.17g`` so identical inputs give byte-identical
files.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 martingale
rejection (only with ``--assert-martingale``).
"""

import argparse
import hashlib
import json
import logging
import os
import platform
import sys

import numpy as np
import scipy

from . import __version__, kernels
from .annuity import factor_table
from .config import (
    COMMANDS,
    ExperimentSpec,
    build_market,
    build_pde_settings,
    build_preferences,
    build_rule,
    build_sim_config,
    build_strategy,
    build_tree,
    load_toml,
)
from .discrete import candidate_factor, martingale_verify, solve_recursion, wealth_and_consumption
from .errors import ConfigError, McsError, NumericalError
from .market import DeterministicMarket, VasicekMarket
from .pde import (
    alpha_c_table,
    closed_form_surface,
    convergence_study,
    hedge_strategy,
    self_convergence_study,
    solve_annuity_pde,
    solve_mcs_pde,
)
from .simulator import SimConfig, exhaustion_check, martingale_test, simulate, vol_check
from .strategies import SurfaceRule, merton_rate_curves, merton_rule, mcs_rate_curve, mcs_rule

log = logging.getLogger("mcslab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_MARTINGALE = 0, 2, 3, 4


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


class Run:
    """Output directory bookkeeping for one experiment."""

    def __init__(self, spec):
        self.spec = spec
        self.files = {}
        self.summary = {}
        os.makedirs(spec.out, exist_ok=True)
        self.header = "# spec_sha256={} mcslab={} numpy={} scipy={} python={}".format(
            spec.hash, __version__, np.__version__, scipy.__version__, platform.python_version()
        )

    def csv(self, name, columns, rows):
        path = os.path.join(self.spec.out, name)
        lines = [self.header, ",".join(columns)]
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        data = ("\n".join(lines) + "\n").encode()
        with open(path, "wb") as fh:
            fh.write(data)
        self.files[name] = hashlib.sha256(data).hexdigest()
        log.info("wrote %s (%d rows)", path, len(rows))

    def finish(self, status):
        manifest = {
            "command": self.spec.command,
            "spec_sha256": self.spec.hash,
            "seed": self.spec.seed,
            "status": status,
            "versions": {
                "mcslab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
            "kernel_backend": kernels.BACKEND,
            "files": self.files,
            "summary": self.summary,
            "spec": self.spec.raw,
        }
        with open(os.path.join(self.spec.out, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return str(v)


def _require(market, cls, command):
    if not isinstance(market, cls):
        kind = "deterministic" if cls is DeterministicMarket else "vasicek"
        raise ConfigError(f"'{command}' needs a market of kind {kind!r}", "market.kind")


def _vasicek_surface(spec, market):
    """(strategy, surface) for a short-rate spec; ``kind = "hedge"`` uses the annuity hedge."""
    settings = build_pde_settings(spec.raw)
    grid = settings.grid(market)
    kw = dict(theta=settings.theta, rannacher=settings.rannacher)
    pi = build_strategy(spec.raw, market)
    if pi is None:
        pi = hedge_strategy(market, solve_annuity_pde(market, grid, **kw))
    surf = solve_mcs_pde(market, pi, grid, tol=settings.tol, max_iter=settings.max_iter, **kw)
    return pi, surf, settings


def cmd_factor(spec, run):
    market = build_market(spec.raw)
    _require(market, DeterministicMarket, "factor")
    prefs = build_preferences(spec.raw, market)
    pi = build_strategy(spec.raw, market, prefs)
    f = mcs_rate_curve(market, pi)
    steps = spec.steps or 1000
    t = np.linspace(0.0, market.T, steps + 1)
    B, _ = factor_table(f, t, market.T)
    run.csv("factor.csv", ("t", "f3", "B"), list(zip(t, np.broadcast_to(f(t), t.shape), B)))
    run.summary["B0"] = float(B[0])
    return EXIT_OK


def _martingale_outputs(run, bundle, cfg):
    rep = martingale_test(bundle, cfg)
    run.csv("martingale.csv", ("t", "mean_c", "se", "z", "drift", "cond_t"), rep.rows())
    ex = exhaustion_check(bundle)
    run.csv(
        "exhaustion.csv",
        ("steps", "dt", "deflated_max", "raw_max", "raw_mean", "budget_gap"),
        [(ex.steps, ex.dt, ex.deflated_max, ex.raw_max, ex.raw_mean, ex.budget_gap)],
    )
    run.summary.update(
        c0=rep.c0, max_abs_z=rep.max_abs_z, martingale_pass=rep.passes(),
        deflated_max=ex.deflated_max, raw_max=ex.raw_max,
    )
    return rep


def cmd_simulate(spec, run):
    market = build_market(spec.raw)
    cfg = build_sim_config(spec.raw, spec.seed, spec.paths, spec.steps)
    if isinstance(market, DeterministicMarket):
        prefs = build_preferences(spec.raw, market)
        pi = build_strategy(spec.raw, market, prefs)
        rule = build_rule(spec.raw, market, pi, prefs)
        surface = None
    else:
        pi, surface, _ = _vasicek_surface(spec, market)
        rule = SurfaceRule(surface)
    bundle = simulate(market, pi, rule, cfg)
    rep = _martingale_outputs(run, bundle, cfg)
    if isinstance(market, VasicekMarket) and cfg.vol_window > 0:
        vt = vol_check(bundle, market, pi, surface)
        run.csv("vol.csv", ("t", "realized_var", "predicted_var", "rel_error"), vt.rows())
        run.summary["vol_pass"] = vt.passes()
        run.summary["clamped_lookups"] = bundle.n_clamped
    if spec.assert_martingale and not rep.passes():
        log.error("martingale test rejected: max |z| = %.3f", rep.max_abs_z)
        return EXIT_MARTINGALE
    return EXIT_OK


def cmd_pde(spec, run):
    market = build_market(spec.raw)
    _require(market, VasicekMarket, "pde")
    pi, surface, settings = _vasicek_surface(spec, market)
    hedge = build_strategy(spec.raw, market) is None
    tt, rr = np.meshgrid(surface.t_nodes, surface.r_nodes, indexing="ij")
    run.csv("surface.csv", ("t", "r", "a"), list(zip(tt.ravel(), rr.ravel(), surface.values.ravel())))
    run.summary["alpha_c_sup"] = float(np.max(np.abs(alpha_c_table(surface, market, pi))))
    run.summary["picard_max"] = int(np.max(surface.picard_iterations))
    if spec.refine:
        base = settings.grid(market)
        if hedge:
            rows = convergence_study(market, base, spec.refine + 1, mode="hedge")
            cols = ("n_t", "n_r", "max_rel_error", "ratio")
        else:
            rows = self_convergence_study(market, pi, base, spec.refine + 1)
            cols = ("n_t", "n_r", "max_rel_difference", "ratio")
        run.csv("convergence.csv", cols, [(r.n_t, r.n_r, r.max_rel_error, r.ratio) for r in rows])
        for r in rows:
            print(f"{r.n_t:6d} {r.n_r:6d} {r.max_rel_error:.4e} {r.ratio:.3f}")
    return EXIT_OK


def cmd_annuity(spec, run):
    market = build_market(spec.raw)
    if isinstance(market, DeterministicMarket):
        steps = spec.steps or 1000
        t = np.linspace(0.0, market.T, steps + 1)
        B, _ = factor_table(market.r, t, market.T)
        run.csv("annuity.csv", ("t", "B"), list(zip(t, B)))
        run.summary["B0"] = float(B[0])
        return EXIT_OK
    settings = build_pde_settings(spec.raw)
    grid = settings.grid(market)
    surf = solve_annuity_pde(market, grid, theta=settings.theta, rannacher=settings.rannacher)
    exact = closed_form_surface(market, grid)
    tt, rr = np.meshgrid(grid.t_nodes, grid.r_nodes, indexing="ij")
    run.csv(
        "annuity.csv", ("t", "r", "a_pde", "a_closed"),
        list(zip(tt.ravel(), rr.ravel(), surf.values.ravel(), exact.values.ravel())),
    )
    live = grid.t_nodes < market.T
    run.summary["max_rel_error"] = float(np.max(np.abs(surf.values[live] / exact.values[live] - 1)))
    return EXIT_OK


def cmd_discrete(spec, run):
    tree = build_tree(spec.raw)
    method = spec.raw["tree"].get("method", "recursion")
    if method == "recursion":
        fac = solve_recursion(tree)
    elif method == "candidate":
        fac = candidate_factor(tree)
    else:
        raise ConfigError(f"unknown method {method!r}", "tree.method")
    x0 = float(spec.raw["tree"].get("x0", 1.0))
    X, C = wealth_and_consumption(fac, x0)
    rows = [(v, int(tree.period[v]), fac.a[v], C[v], X[v]) for v in range(1, tree.size)]
    run.csv("discrete.csv", ("node_id", "period", "a", "C", "X"), rows)
    ver = martingale_verify(tree, fac, x0)
    run.summary.update(violation=ver.violation, exhaustion=ver.exhaustion, method=method)
    print(f"martingale violation {ver.violation:.3e}, terminal wealth {ver.exhaustion:.3e}")
    return EXIT_OK


def cmd_compare_merton(spec, run):
    market = build_market(spec.raw)
    _require(market, DeterministicMarket, "compare-merton")
    prefs = build_preferences(spec.raw, market)
    if prefs is None:
        raise ConfigError("missing table", "preferences")
    pi, m_rule = merton_rule(market, prefs)
    f1, f2 = merton_rate_curves(market, prefs)
    f3 = mcs_rate_curve(market, pi)
    steps = spec.steps or 1000
    t = np.linspace(0.0, market.T, steps + 1)
    b_merton, _ = factor_table(f2, t, market.T)
    b_mcs, _ = factor_table(f3, t, market.T)

    def col(f):
        return np.broadcast_to(f(t), t.shape)

    run.csv(
        "factors.csv", ("t", "f1", "f2", "f3", "B_merton", "B_mcs"),
        list(zip(t, col(f1), col(f2), col(f3), b_merton, b_mcs)),
    )
    cfg = build_sim_config(spec.raw, spec.seed, spec.paths, spec.steps)
    a = simulate(market, pi, mcs_rule(market, pi), cfg)
    b = simulate(market, pi, m_rule, cfg)
    ra, rb = martingale_test(a, cfg), martingale_test(b, cfg)
    rel = np.max(np.abs(b.c - a.c) / a.c, axis=1)
    rows = [
        (a.times[j], np.mean(a.c[j]), np.mean(b.c[j]), rel[j], za, zb)
        for j, za, zb in zip(a.report, ra.z, rb.z)
    ]
    run.csv("paths.csv", ("t", "mean_c_mcs", "mean_c_merton", "max_rel_diff", "z_mcs", "z_merton"), rows)
    run.summary.update(max_rel_diff=float(rel.max()), max_abs_z_mcs=ra.max_abs_z, max_abs_z_merton=rb.max_abs_z)
    return EXIT_OK


def cmd_convergence(spec, run):
    market = build_market(spec.raw)
    levels = (spec.refine or 3) + 1
    if isinstance(market, VasicekMarket):
        pi, surface, settings = _vasicek_surface(spec, market)
        base = settings.grid(market)
        if build_strategy(spec.raw, market) is None:
            rows = convergence_study(market, base, levels, mode="hedge")
        else:
            rows = self_convergence_study(market, pi, base, levels)
        run.csv("pde_convergence.csv", ("n_t", "n_r", "max_rel_error", "ratio"),
                [(r.n_t, r.n_r, r.max_rel_error, r.ratio) for r in rows])
        rule = SurfaceRule(surface)
    else:
        prefs = build_preferences(spec.raw, market)
        pi = build_strategy(spec.raw, market, prefs)
        rule = build_rule(spec.raw, market, pi, prefs)
    cfg = build_sim_config(spec.raw, spec.seed, spec.paths, spec.steps)
    rows, prev = [], None
    for k in range(levels):
        c = SimConfig(
            x0=cfg.x0, steps=cfg.steps * 2**k, paths=cfg.paths, master_seed=cfg.master_seed,
            scheme=cfg.scheme, antithetic=cfg.antithetic, batch_size=cfg.batch_size,
        )
        ex = exhaustion_check(simulate(market, pi, rule, c))
        ratio = prev / ex.deflated_max if prev else float("nan")
        rows.append((c.steps, ex.dt, ex.deflated_max, ex.raw_max, ratio))
        prev = ex.deflated_max
    run.csv("exhaustion_convergence.csv", ("steps", "dt", "deflated_max", "raw_max", "ratio"), rows)
    return EXIT_OK


HANDLERS = {
    "factor": cmd_factor,
    "simulate": cmd_simulate,
    "pde": cmd_pde,
    "annuity": cmd_annuity,
    "discrete": cmd_discrete,
    "compare-merton": cmd_compare_merton,
    "convergence": cmd_convergence,
}


def build_parser():
    p = argparse.ArgumentParser(prog="mcslab", description="Martingale consumption experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="TOML experiment spec")
        s.add_argument("--seed", type=int, help="master seed (overrides simulation.seed)")
        s.add_argument("--out", default="out", help="output directory")
        s.add_argument("--paths", type=int, help="Monte Carlo paths")
        s.add_argument("--steps", type=int, help="time steps")
        s.add_argument("--refine", type=int, default=0, help="number of grid doublings")
        s.add_argument("--assert-martingale", action="store_true",
                       help="exit with status 4 if the martingale test rejects")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", "--seed")
        if args.refine < 0:
            raise ConfigError("must be non-negative", "--refine")
        raw = load_toml(args.config)
        spec = ExperimentSpec(
            args.command, raw, args.out, args.seed, args.paths, args.steps, args.refine,
            args.assert_martingale,
        )
        run = Run(spec)
        status = HANDLERS[args.command](spec, run)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except McsError as exc:
        # config, domain, grid and preference errors all come from the inputs
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run.finish(status)
    return status


if __name__ == "__main__":
    sys.exit(main())

"""Martingale consumption strategies.

Annuity factors, deterministic and short-rate markets, Monte Carlo
simulation with martingale diagnostics, a semilinear PDE solver for the
wealth-to-consumption factor, and exact scenario-tree recursions.
"""

__version__ = "0.1.0"

from .annuity import annuity_factor, constant_rate_factor, factor_table
from .curves import Affine, Constant, PiecewiseConstant, Tabulated, curve_from_spec
from .discrete import (
    ScenarioTree,
    candidate_factor,
    dependent_tree,
    fixed_rate_tree,
    iid_tree,
    martingale_verify,
    random_tree,
    solve_recursion,
)
from .errors import ConfigError, McsError, NumericalError
from .market import DeterministicMarket, VasicekMarket
from .pde import (
    FactorSurface,
    Grid2D,
    alpha_c_residual,
    convergence_study,
    hedge_strategy,
    solve_annuity_pde,
    solve_mcs_pde,
    vasicek_annuity_closed_form,
)
from .simulator import SimConfig, exhaustion_check, martingale_test, simulate, vol_check
from .strategies import (
    CrraPreferences,
    InvestmentStrategy,
    SurfaceRule,
    constant_strategy,
    mcs_factor,
    mcs_rate_f3,
    mcs_rule,
    merton_rule,
    rate_strategy,
)

"""Numerical laboratory for robust utility-maximisation duality.

Three layers:

- :mod:`robustdual.conjugate` — utility functions, Fenchel conjugates,
  and the shifted conjugate family;
- :mod:`robustdual.finite_market` — exact convex-duality experiments on
  finite event trees (polar sets, bipolar checks, primal/dual solvers);
- :mod:`robustdual.diffusion` — drift/volatility-uncertain diffusion
  markets: analytic values, Monte Carlo verification, density bounds.

The command-line driver lives in :mod:`robustdual.cli`.
"""

from .config import DEFAULT_TOLERANCES, Tolerances, log_grid
from .conjugate import (
    ConjugatePair,
    ShiftedFamily,
    SolverError,
    UtilityFunction,
    UtilityKind,
    biconjugate_residual,
    conjugate_bound_V1,
    eval_conjugate,
    eval_shifted_conjugate,
    eval_utility,
    numeric_conjugate,
)
from .finite_market import (
    ClaimCone,
    DualityReport,
    FiniteMarketInstance,
    PolarMeasureSet,
    PriorPolytope,
    build_polar,
    check_no_arbitrage_assumption,
    dual_solve,
    duality_gap,
    minimax_exchange_check,
    primal_solve,
    verify_bipolar,
)

__version__ = "0.1.0"

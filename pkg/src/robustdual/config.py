"""Central tolerance and grid conventions.

Every report emitted by the experiment driver echoes the tolerances that
were in force, so they live in one place.
"""

from dataclasses import dataclass

import numpy as np

# Analytic-vs-numeric agreement for closed-form conjugates.
ANALYTIC_TOL = 1e-8
# Brute-force / grid-search oracle agreement.
ORACLE_TOL = 1e-6
# Linear-programming feasibility slack.
LP_TOL = 1e-10
# Duality-gap contract on shipped finite-market instances.
GAP_TOL = 1e-5
# Statistical assertions: number of standard errors.
MC_SIGMA = 4.0
# Default Monte Carlo path count.
MC_PATHS = 100_000


@dataclass(frozen=True)
class Tolerances:
    analytic: float = ANALYTIC_TOL
    oracle: float = ORACLE_TOL
    lp: float = LP_TOL
    gap: float = GAP_TOL
    mc_sigma: float = MC_SIGMA

    def as_dict(self) -> dict:
        return {
            "analytic": self.analytic,
            "oracle": self.oracle,
            "lp": self.lp,
            "gap": self.gap,
            "mc_sigma": self.mc_sigma,
        }


DEFAULT_TOLERANCES = Tolerances()


def log_grid(lo: float, hi: float, n: int = 513) -> np.ndarray:
    """Log-uniform grid with ``n`` points on [lo, hi], lo > 0."""
    if not (0 < lo < hi):
        raise ValueError(f"need 0 < lo < hi, got [{lo}, {hi}]")
    if n < 2:
        raise ValueError("grid needs at least 2 points")
    return np.logspace(np.log10(lo), np.log10(hi), n)

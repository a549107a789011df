"""Utility functions, Fenchel conjugates, and shifted conjugate families.

Utilities U are concave and nondecreasing on (0, inf).  The conjugate is

    V(y) = sup_{x >= 0} [U(x) - x*y],  y > 0,

extended by V(0) = lim_{y->0} V(y) and V(y) = +inf for y < 0.  The
extensions to the whole line use +-inf sentinels (never NaN), so the
order-theoretic invariants can be tested exactly.

Closed forms are used for the log / power / exponential kinds and for
piecewise-linear utilities (whose conjugate is again piecewise-linear);
a bracketed numeric supremum serves as the generic route and as the
independent oracle for the closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

INF = math.inf

__all__ = [
    "UtilityKind",
    "UtilityFunction",
    "ConjugatePair",
    "ShiftedFamily",
    "SolverError",
    "eval_utility",
    "eval_conjugate",
    "eval_shifted_conjugate",
    "conjugate_bound_V1",
    "biconjugate_residual",
    "numeric_conjugate",
    "scaled_error",
]


def scaled_error(value: float, reference: float) -> float:
    """|value - reference| in absolute terms, relative once the reference
    leaves the O(1) range (float64 cannot hold 1e-8 absolute at 1e53)."""
    return abs(value - reference) / max(1.0, abs(reference))


class SolverError(RuntimeError):
    """Inner maximisation failed; carries bracket diagnostics."""


class UtilityKind(Enum):
    LOG = "log"
    POWER = "power"
    EXPONENTIAL = "exponential"
    PIECEWISE_LINEAR = "piecewise_linear"


@dataclass(frozen=True)
class UtilityFunction:
    """Concave nondecreasing utility on (0, inf) with a type tag.

    ``domain_floor_value`` is U(0) = lim_{x->0} U(x); it is -inf exactly
    for the kinds unbounded from below (log, power with p < 0).
    """

    kind: UtilityKind
    p: Optional[float] = None        # power exponent, in (-inf,0) u (0,1)
    lam: Optional[float] = None      # exponential rate, > 0
    breakpoints: Optional[tuple] = None  # piecewise-linear kinks, increasing, > 0
    slopes: Optional[tuple] = None       # one more slope than breakpoints, decreasing, >= 0
    u0: Optional[float] = None           # piecewise-linear value at x = 0

    # ------------------------------------------------------------------
    # constructors
    # ------------------------------------------------------------------
    @classmethod
    def log(cls) -> "UtilityFunction":
        return cls(UtilityKind.LOG)

    @classmethod
    def power(cls, p: float) -> "UtilityFunction":
        if p == 0 or p >= 1:
            raise ValueError(f"power exponent must lie in (-inf,0) u (0,1), got {p}")
        return cls(UtilityKind.POWER, p=p)

    @classmethod
    def exponential(cls, lam: float) -> "UtilityFunction":
        if lam <= 0:
            raise ValueError(f"exponential rate must be positive, got {lam}")
        return cls(UtilityKind.EXPONENTIAL, lam=lam)

    @classmethod
    def piecewise_linear(
        cls,
        breakpoints: Sequence[float],
        slopes: Sequence[float],
        u0: float = 0.0,
    ) -> "UtilityFunction":
        bp = tuple(float(b) for b in breakpoints)
        sl = tuple(float(s) for s in slopes)
        if len(sl) != len(bp) + 1:
            raise ValueError("need exactly one more slope than breakpoints")
        if any(b <= 0 for b in bp) or any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be positive and strictly increasing")
        if any(s < 0 for s in sl) or any(s2 >= s1 for s1, s2 in zip(sl, sl[1:])):
            raise ValueError("slopes must be nonnegative and strictly decreasing")
        return cls(UtilityKind.PIECEWISE_LINEAR, breakpoints=bp, slopes=sl, u0=float(u0))

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------
    @property
    def domain_floor_value(self) -> float:
        """U(0) as an extended real."""
        if self.kind is UtilityKind.LOG:
            return -INF
        if self.kind is UtilityKind.POWER:
            return 0.0 if self.p > 0 else -INF
        if self.kind is UtilityKind.EXPONENTIAL:
            return -1.0
        return self.u0

    @property
    def unbounded_below(self) -> bool:
        return self.domain_floor_value == -INF

    def __call__(self, x: float) -> float:
        return eval_utility(self, x)

    def derivative(self, x: float) -> float:
        """U'(x) for x > 0 (right derivative at kinks)."""
        if x <= 0:
            raise ValueError("derivative defined on (0, inf)")
        if self.kind is UtilityKind.LOG:
            return 1.0 / x
        if self.kind is UtilityKind.POWER:
            return x ** (self.p - 1.0)
        if self.kind is UtilityKind.EXPONENTIAL:
            return self.lam * math.exp(-self.lam * x)
        idx = sum(1 for b in self.breakpoints if b <= x)
        return self.slopes[idx]

    def inverse_derivative(self, y: float) -> float:
        """Smallest x >= 0 with U'(x) <= y; inf if none (smooth kinds only)."""
        if y <= 0:
            return INF
        if self.kind is UtilityKind.LOG:
            return 1.0 / y
        if self.kind is UtilityKind.POWER:
            return y ** (1.0 / (self.p - 1.0))
        if self.kind is UtilityKind.EXPONENTIAL:
            if y >= self.lam:
                return 0.0
            return -math.log(y / self.lam) / self.lam
        raise SolverError("piecewise-linear derivative is not invertible")


def eval_utility(u: UtilityFunction, x: float) -> float:
    """U(x) for x >= 0; at x = 0 the stored limit value is returned."""
    if x < 0:
        raise ValueError(f"utility domain is [0, inf), got x={x}")
    if x == 0:
        return u.domain_floor_value
    if u.kind is UtilityKind.LOG:
        return math.log(x)
    if u.kind is UtilityKind.POWER:
        return (x ** u.p) / u.p
    if u.kind is UtilityKind.EXPONENTIAL:
        return -math.exp(-u.lam * x)
    # piecewise linear: integrate slopes segment by segment
    val = u.u0
    prev = 0.0
    for b, s in zip(u.breakpoints, u.slopes):
        if x <= b:
            return val + s * (x - prev)
        val += s * (b - prev)
        prev = b
    return val + u.slopes[-1] * (x - prev)


# ----------------------------------------------------------------------
# numeric supremum (independent oracle, and the generic conjugate route)
# ----------------------------------------------------------------------

_X_FLOOR = 1e-14


def _bracket_xmax(u: UtilityFunction, y: float, shift: float) -> float:
    """Right bracket end for sup_x [U(x + shift) - x*y].

    The maximiser solves U'(x + shift) = y, so ten times the inverse
    marginal utility is a safe overshoot for the smooth kinds; the
    piecewise-linear conjugate peaks at a kink.
    """
    if u.kind is UtilityKind.PIECEWISE_LINEAR:
        return 10.0 * (u.breakpoints[-1] + 1.0)
    x_hat = u.inverse_derivative(y)
    return max(10.0 * x_hat, 10.0 / y, 10.0 * shift, 1.0)


def numeric_conjugate(u: UtilityFunction, y: float, shift: float = 0.0,
                      xatol: float = 1e-12) -> float:
    """sup_{x >= 0} [U(x + shift) - x*y] by bracketed 1-d maximisation.

    The objective is concave in x, so a single interior peak exists (or
    the sup sits at x = 0).  The bracket [0, X_max] is validated by a
    derivative-sign check at X_max; optimisation runs in log-x to keep
    relative resolution uniform across twelve decades.
    """
    if y <= 0:
        raise ValueError("numeric conjugate needs y > 0")
    x_max = _bracket_xmax(u, y, shift)

    def phi(x: float) -> float:
        return eval_utility(u, x + shift) - x * y

    # slope at the right edge must be negative or the bracket is invalid
    h = x_max * 1e-7
    if phi(x_max) - phi(x_max - h) > 0:
        raise SolverError(
            f"supremum not bracketed: objective still increasing at "
            f"x_max={x_max:g} (y={y:g}, kind={u.kind.value})"
        )

    res = minimize_scalar(
        lambda s: -phi(math.exp(s)),
        bounds=(math.log(_X_FLOOR), math.log(x_max)),
        method="bounded",
        options={"xatol": xatol, "maxiter": 800},
    )
    if not res.success:
        raise SolverError(f"inner maximisation failed: {res.message} "
                          f"(y={y:g}, bracket [0, {x_max:g}])")
    best = -res.fun
    boundary = phi(0.0)
    return max(best, boundary)


def numeric_conjugate_argmax(u: UtilityFunction, y: float) -> float:
    """Maximiser of x -> U(x) - x*y on [0, inf) (numeric)."""
    x_max = _bracket_xmax(u, y, 0.0)

    def phi(x: float) -> float:
        return eval_utility(u, x) - x * y

    res = minimize_scalar(
        lambda s: -phi(math.exp(s)),
        bounds=(math.log(_X_FLOOR), math.log(x_max)),
        method="bounded",
        options={"xatol": 1e-13, "maxiter": 800},
    )
    x_star = math.exp(res.x)
    if phi(0.0) >= -res.fun:
        return 0.0
    return x_star


# ----------------------------------------------------------------------
# conjugate pair
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ConjugatePair:
    """(U, V) with extensions: V(0) limit, V(y<0) = +inf, U(x<0) = -inf."""

    utility: UtilityFunction

    @property
    def has_closed_form(self) -> bool:
        return self.utility.kind is not None and self.utility.kind in (
            UtilityKind.LOG,
            UtilityKind.POWER,
            UtilityKind.EXPONENTIAL,
            UtilityKind.PIECEWISE_LINEAR,
        )

    @property
    def v0(self) -> float:
        """V(0) = lim_{y->0} V(y) = U(inf) when U is bounded above, else +inf."""
        u = self.utility
        if u.kind is UtilityKind.LOG:
            return INF
        if u.kind is UtilityKind.POWER:
            return INF if u.p > 0 else 0.0
        if u.kind is UtilityKind.EXPONENTIAL:
            return 0.0
        return INF if u.slopes[-1] > 0 else eval_utility(u, u.breakpoints[-1])

    def analytic(self, y: float) -> float:
        """Closed-form V(y) for y > 0."""
        u = self.utility
        if u.kind is UtilityKind.LOG:
            return -math.log(y) - 1.0
        if u.kind is UtilityKind.POWER:
            p = u.p
            return ((1.0 - p) / p) * y ** (p / (p - 1.0))
        if u.kind is UtilityKind.EXPONENTIAL:
            lam = u.lam
            if y >= lam:
                return -1.0
            z = y / lam
            return z * (math.log(z) - 1.0)
        # piecewise linear: sup attained at a kink (or +inf below last slope)
        if y < u.slopes[-1]:
            return INF
        kinks = (0.0,) + u.breakpoints
        return max(eval_utility(u, x) - x * y for x in kinks)

    def __call__(self, y: float) -> float:
        return eval_conjugate(self, y)

    def tilde_u(self, x: float) -> float:
        """Extension of U to the whole line: -inf on x < 0."""
        if x < 0:
            return -INF
        return eval_utility(self.utility, x)

    def tilde_v(self, y: float) -> float:
        """Extension of V to the whole line: +inf on y < 0, limit at 0."""
        return eval_conjugate(self, y)


def eval_conjugate(pair: ConjugatePair, y: float) -> float:
    """V(y) = sup_{x>=0}[U(x) - x*y] for y > 0; V(0) limit; +inf for y < 0."""
    if y < 0:
        return INF
    if y == 0:
        return pair.v0
    return pair.analytic(y)


def biconjugate_residual(pair: ConjugatePair, x: float, y_grid: np.ndarray) -> float:
    """| U(x) - min over y of (V(y) + x*y) |, with local refinement.

    The y grid must be nonempty; the minimiser is polished by a bounded
    search in log-y between the grid neighbours of the best point.
    """
    y_grid = np.asarray(y_grid, dtype=float)
    if y_grid.size == 0:
        raise ValueError("empty y grid")
    if x <= 0:
        raise ValueError("biconjugate residual defined for x > 0")

    vals = np.array([eval_conjugate(pair, y) + x * y for y in y_grid])
    i = int(np.argmin(vals))
    best = vals[i]
    lo = y_grid[max(i - 1, 0)]
    hi = y_grid[min(i + 1, y_grid.size - 1)]
    if hi > lo:
        def objective(s: float) -> float:
            v = eval_conjugate(pair, math.exp(s))
            # keep the line search finite where V jumps to +inf
            return v + x * math.exp(s) if math.isfinite(v) else 1e300

        res = minimize_scalar(objective, bounds=(math.log(lo), math.log(hi)),
                              method="bounded", options={"xatol": 1e-13})
        best = min(best, res.fun)
    if pair.v0 < INF:
        best = min(best, pair.v0)  # y = 0 endpoint
    return abs(eval_utility(pair.utility, x) - best)


# ----------------------------------------------------------------------
# shifted family U_n(x) = U(x + 1/n)
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ShiftedFamily:
    """Shifted utility U_n(x) = U(x + 1/n) and its conjugate V_n."""

    base: ConjugatePair
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"shift index must be >= 1, got {self.n}")

    @property
    def shift(self) -> float:
        return 1.0 / self.n

    def utility(self, x: float) -> float:
        if x < 0:
            raise ValueError(f"shifted utility domain is [0, inf), got {x}")
        return eval_utility(self.base.utility, x + self.shift)

    def conjugate_analytic(self, y: float) -> float:
        """V_n(y) for the smooth kinds: interior first-order optimum or boundary."""
        u = self.base.utility
        if u.kind is UtilityKind.PIECEWISE_LINEAR:
            raise SolverError("no closed form for shifted piecewise-linear conjugate")
        x_hat = u.inverse_derivative(y) - self.shift
        if x_hat <= 0:
            return eval_utility(u, self.shift)
        return self.base.analytic(y) + self.shift * y


def eval_shifted_conjugate(family: ShiftedFamily, y: float) -> float:
    """V_n(y) = sup_{x>=0}[U(x + 1/n) - x*y] for y > 0."""
    if y <= 0:
        raise ValueError("shifted conjugate needs y > 0")
    u = family.base.utility
    if u.kind is UtilityKind.PIECEWISE_LINEAR:
        return numeric_conjugate(u, y, shift=family.shift)
    return family.conjugate_analytic(y)


def conjugate_bound_V1(kind: str, y: float, p: Optional[float] = None) -> float:
    """Upper bound on V_1 for the once-shifted log / power(0<p<1) utility.

    log:   log(1/y) - 1 + y
    power: (1/p - 1) * (1/y)^(p/(1-p)) + y
    """
    if y <= 0:
        raise ValueError("bound defined for y > 0")
    if kind == "log":
        return math.log(1.0 / y) - 1.0 + y
    if kind == "power":
        if p is None or not (0 < p < 1):
            raise ValueError("power bound needs p in (0, 1)")
        return (1.0 / p - 1.0) * (1.0 / y) ** (p / (1.0 - p)) + y
    raise ValueError(f"bound available for 'log' and 'power', got {kind!r}")

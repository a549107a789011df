"""Acceptance suite: the ten headline checks, one test (and one printed
pass/fail line) per criterion, at the contracted tolerances and runtime
budgets.  Run with `pytest tests/test_acceptance.py -v`.
"""

import math
import time

import numpy as np
import pytest

from robustdual.config import log_grid
from robustdual.conjugate import (
    ConjugatePair,
    ShiftedFamily,
    UtilityFunction,
    biconjugate_residual,
    conjugate_bound_V1,
    eval_shifted_conjugate,
    numeric_conjugate,
    scaled_error,
)
from robustdual.diffusion import (
    StrategySpec,
    UncertaintySet,
    density_moment_check,
    duality_identity_check,
    girsanov_density,
    martingale_separation_test,
    simulate_paths,
)
from robustdual.finite_market import (
    build_polar,
    check_no_arbitrage_assumption,
    duality_gap,
    load_instance,
    minimax_exchange_check,
    primal_grid_oracle,
    verify_bipolar,
)

from test_cli import INSTANCES

LOG = UtilityFunction.log()
POW_HALF = UtilityFunction.power(0.5)
M_PATHS = 100_000

SHIPPED_INSTANCES = ("binomial_one_prior.json", "binomial_two_prior.json",
                     "trinomial_two_prior.json")


def report(criterion: str, passed: bool, detail: str) -> None:
    print(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
    assert passed, f"{criterion}: {detail}"


@pytest.fixture(scope="module")
def theta():
    return UncertaintySet.from_pairs([(0.05, 0.04), (0.10, 0.09)], horizon=1.0)


def test_criterion_01_conjugate_engine():
    start = time.perf_counter()
    y_grid = log_grid(1e-6, 1e6, 513)
    family = [LOG, POW_HALF, UtilityFunction.power(-1.0),
              UtilityFunction.power(-0.5), UtilityFunction.power(0.3),
              UtilityFunction.power(0.9), UtilityFunction.exponential(0.5),
              UtilityFunction.exponential(1.0), UtilityFunction.exponential(2.0)]
    worst_conj = 0.0
    worst_bic = 0.0
    for u in family:
        pair = ConjugatePair(u)
        worst_conj = max(worst_conj, max(
            scaled_error(numeric_conjugate(u, y), pair.analytic(y))
            for y in y_grid))
        worst_bic = max(worst_bic, max(
            biconjugate_residual(pair, x, y_grid)
            for x in np.geomspace(1e-2, 1e2, 100)))
    elapsed = time.perf_counter() - start
    ok = worst_conj <= 1e-8 and worst_bic <= 1e-6 and elapsed < 5.0
    report("criterion 1 (conjugate engine)", ok,
           f"conjugate err {worst_conj:.2e} <= 1e-8, biconjugate "
           f"{worst_bic:.2e} <= 1e-6, {elapsed:.1f}s < 5s")


def test_criterion_02_shifted_family_convergence():
    start = time.perf_counter()
    # V_n - V = y/n at interior optima, so the 1e-3 tail bound pins the
    # 50-point grid to y <= 10
    y_grid = np.geomspace(1e-3, 10.0, 50)
    worst_tail = 0.0
    monotone = True
    for u in (LOG, POW_HALF):
        pair = ConjugatePair(u)
        for y in y_grid:
            vals = [eval_shifted_conjugate(ShiftedFamily(pair, n), y)
                    for n in (1, 10, 100, 1000, 10_000)]
            monotone &= all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
            worst_tail = max(worst_tail, vals[-1] - pair.analytic(y))
    elapsed = time.perf_counter() - start
    ok = monotone and worst_tail <= 1e-3 + 1e-12 and elapsed < 5.0
    report("criterion 2 (shifted-family convergence)", ok,
           f"monotone={monotone}, V_1e4 - V tail {worst_tail:.2e} <= 1e-3, "
           f"{elapsed:.1f}s < 5s")


def test_criterion_03_v1_bounds():
    start = time.perf_counter()
    worst_eq = 0.0
    strict = True
    for kind, u, p in (("log", LOG, None), ("power", POW_HALF, 0.5)):
        fam = ShiftedFamily(ConjugatePair(u), 1)
        for y in np.linspace(0.02, 1.0, 50):
            worst_eq = max(worst_eq, abs(
                eval_shifted_conjugate(fam, y) - conjugate_bound_V1(kind, y, p=p)))
        for y in np.linspace(1.01, 20.0, 50):
            strict &= eval_shifted_conjugate(fam, y) < conjugate_bound_V1(
                kind, y, p=p)
    elapsed = time.perf_counter() - start
    ok = worst_eq <= 1e-8 and strict and elapsed < 1.0
    report("criterion 3 (V1 bounds)", ok,
           f"equality err {worst_eq:.2e} <= 1e-8 on (0,1], strict domination "
           f"for y>1: {strict}, {elapsed:.2f}s < 1s")


def test_criterion_04_finite_market_duality():
    start = time.perf_counter()
    y_grid = log_grid(1e-2, 1e2, 41)
    worst_gap = 0.0
    worst_oracle = 0.0
    for name in SHIPPED_INSTANCES:
        inst, priors, _ = load_instance(INSTANCES / name)
        polar = build_polar(inst, priors)
        for u in (LOG, POW_HALF):
            for x in (0.5, 1.0, 2.0):
                rep = duality_gap(inst, priors, polar, u, x, y_grid)
                worst_gap = max(worst_gap, rep.residual)
                oracle_val, _ = primal_grid_oracle(inst, priors, polar, u, x,
                                                   step=1e-2)
                worst_oracle = max(worst_oracle, abs(oracle_val - rep.u_value))
    elapsed = time.perf_counter() - start
    ok = worst_gap <= 1e-5 and worst_oracle <= 2e-3 and elapsed < 60.0
    report("criterion 4 (finite-market duality)", ok,
           f"gap {worst_gap:.2e} <= 1e-5, oracle diff {worst_oracle:.2e} "
           f"<= 2e-3, {elapsed:.1f}s < 60s")


def test_criterion_05_bipolar_verification():
    start = time.perf_counter()
    all_pass = True
    for name in SHIPPED_INSTANCES:
        inst, priors, _ = load_instance(INSTANCES / name)
        polar = build_polar(inst, priors)
        all_pass &= verify_bipolar(inst, priors, polar).passed
    inst, priors, _ = load_instance(INSTANCES / "arbitrage_instance.json")
    polar = build_polar(inst, priors)
    cert = check_no_arbitrage_assumption(priors, polar)
    arb_flagged = (polar.empty and polar.arbitrage_suspected
                   and not cert.satisfied
                   and not verify_bipolar(inst, priors, polar).passed)
    elapsed = time.perf_counter() - start
    ok = all_pass and arb_flagged and elapsed < 10.0
    report("criterion 5 (bipolar verification)", ok,
           f"no-arbitrage instances pass: {all_pass}, arbitrage instance "
           f"flagged: {arb_flagged}, {elapsed:.1f}s < 10s")


def test_criterion_06_minimax_exchange():
    start = time.perf_counter()
    inst, priors, _ = load_instance(INSTANCES / "binomial_two_prior.json")
    polar = build_polar(inst, priors)
    out = minimax_exchange_check(inst, priors, polar, LOG, 1.0,
                                 g_max=3.0, step=1e-2)
    elapsed = time.perf_counter() - start
    ok = abs(out["residual"]) <= 2e-3 and elapsed < 30.0
    report("criterion 6 (minimax exchange)", ok,
           f"|inf-sup - sup-inf| {abs(out['residual']):.2e} <= 2e-3 at grid "
           f"step 1e-2, {elapsed:.1f}s < 30s")


def test_criterion_07_diffusion_duality(theta):
    start = time.perf_counter()
    y_grid = np.geomspace(1e-2, 1e2, 41)
    res_log = duality_identity_check(LOG, 1.0, theta, y_grid)["residual"]
    res_pow = duality_identity_check(POW_HALF, 1.0, theta, y_grid)["residual"]
    elapsed = time.perf_counter() - start
    ok = res_log <= 1e-6 and res_pow <= 1e-4 and elapsed < 10.0
    report("criterion 7 (diffusion duality)", ok,
           f"log residual {res_log:.2e} <= 1e-6, power residual "
           f"{res_pow:.2e} <= 1e-4, {elapsed:.1f}s < 10s")


def test_criterion_08_girsanov_suite(theta):
    start = time.perf_counter()
    batch = simulate_paths(theta, [0.05], [[0.04]], n_steps=100,
                           n_paths=M_PATHS, seed=101)
    dens = girsanov_density(batch)
    se_z = dens.z.std(ddof=1) / math.sqrt(M_PATHS)
    mean_ok = abs(dens.z.mean() - 1.0) <= 4 * se_z
    logs = np.log(dens.z)
    se_l = logs.std(ddof=1) / math.sqrt(M_PATHS)
    log_ok = abs(logs.mean() + 0.03125) <= 4 * se_l
    weighted = dens.z * batch.terminal_move()[:, 0]
    se_w = weighted.std(ddof=1) / math.sqrt(M_PATHS)
    drift_ok = abs(weighted.mean()) <= 4 * se_w
    elapsed = time.perf_counter() - start
    ok = mean_ok and log_ok and drift_ok and elapsed < 30.0
    report("criterion 8 (Girsanov suite)", ok,
           f"E[Z]=1: {mean_ok}, E[log Z]=-rhoT/2: {log_ok}, reweighted "
           f"drift 0: {drift_ok}, all at 4 SE, {elapsed:.1f}s < 30s")


def test_criterion_09_density_moment_bound(theta):
    start = time.perf_counter()
    bound_ok = True
    for b, c in zip(theta.b_generators, theta.c_generators):
        for delta in (1.5, 2.0, 3.0):
            rep = density_moment_check(theta, delta, b, c, analytic_only=True)
            bound_ok &= rep.bound_holds
    mc_ok = True
    for b, c in zip(theta.b_generators, theta.c_generators):
        rep = density_moment_check(theta, 2.0, b, c, n_paths=M_PATHS, seed=103)
        mc_ok &= rep.within_mc_tolerance
    elapsed = time.perf_counter() - start
    ok = bound_ok and mc_ok and elapsed < 30.0
    report("criterion 9 (density-moment bound)", ok,
           f"analytic <= uniform bound for deltas {{1.5,2,3}}: {bound_ok}, "
           f"MC within 4 SE at delta=2: {mc_ok}, {elapsed:.1f}s < 30s")


def test_criterion_10_separation_test():
    start = time.perf_counter()
    mart = simulate_paths(None, [0.0], [[0.04]], n_steps=100,
                          n_paths=M_PATHS, seed=107)
    specs = [StrategySpec("zero", label="zero"),
             StrategySpec("constant_units", vector=[1.0], label="constant"),
             StrategySpec("stop_band", band=0.1, label="stopped")]
    mart_ok = all(r["consistent_with_martingale"]
                  for r in martingale_separation_test(mart, specs))
    drift = simulate_paths(None, [0.05], [[0.04]], n_steps=100,
                           n_paths=M_PATHS, seed=107)
    rejected = not martingale_separation_test(
        drift, [StrategySpec("constant_units", vector=[1.0])])[0][
        "consistent_with_martingale"]
    elapsed = time.perf_counter() - start
    ok = mart_ok and rejected and elapsed < 30.0
    report("criterion 10 (separation test)", ok,
           f"martingale gains within 4 SE of 0: {mart_ok}, drifted batch "
           f"rejected: {rejected}, {elapsed:.1f}s < 30s")

"""Experiment driver.

Usage:
    robustdual run <id> [<id> ...] --config <path> [...] [--seed N]
                   [--out DIR] [--parallel]
    robustdual list
    robustdual validate-config <path>

Exit codes: 0 all checks pass, 1 a check failed, 2 config error,
3 solver/internal error.  Configs are TOML or JSON by extension; the
default output root is $ROBUSTDUAL_OUT or ./results.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import __version__
from .config import log_grid
from .conjugate import (
    ConjugatePair,
    SolverError,
    UtilityFunction,
    biconjugate_residual,
    numeric_conjugate,
    scaled_error,
)
from .diffusion import (
    StrategySpec,
    UncertaintySet,
    density_moment_check,
    duality_identity_check,
    martingale_separation_test,
    simulate_paths,
    validate_uncertainty_set,
)
from .finite_market import (
    ArbitrageError,
    LPFailure,
    build_polar,
    check_no_arbitrage_assumption,
    duality_gap,
    load_instance,
    verify_bipolar,
)
from .reporting import CheckRow, config_hash, render_csv, render_manifest

OUTPUT_ROOT_ENV = "ROBUSTDUAL_OUT"

EXIT_PASS = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_INTERNAL_ERROR = 3


class ConfigError(Exception):
    pass


# ----------------------------------------------------------------------
# config plumbing
# ----------------------------------------------------------------------

def load_config(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        if path.suffix == ".json":
            with open(path) as fh:
                return json.load(fh)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    raise ConfigError(f"unknown config extension {path.suffix!r} (use .toml or .json)")


def _utility_from(spec: dict) -> UtilityFunction:
    kind = spec.get("kind")
    if kind == "log":
        return UtilityFunction.log()
    if kind == "power":
        return UtilityFunction.power(float(spec["p"]))
    if kind == "exponential":
        return UtilityFunction.exponential(float(spec["lam"]))
    raise ConfigError(f"unknown utility kind {kind!r}")


def _grid_from(spec: dict) -> np.ndarray:
    return log_grid(float(spec.get("lo", 1e-2)), float(spec.get("hi", 1e2)),
                    int(spec.get("n", 41)))


def _theta_from(spec: dict) -> UncertaintySet:
    return UncertaintySet.from_pairs(
        [(g[0], g[1]) for g in spec["generators"]],
        horizon=float(spec.get("horizon", 1.0)),
        ellipticity=float(spec.get("ellipticity", 1e-6)),
    )


# ----------------------------------------------------------------------
# experiments: each returns a list of
# (check name, tolerance, value, residual, passed)
# ----------------------------------------------------------------------

def _exp_conjugate_suite(cfg: dict, cfg_dir: Path, seed: int) -> list:
    tol_a = float(cfg.get("tolerance_analytic", 1e-8))
    tol_b = float(cfg.get("tolerance_biconjugate", 1e-6))
    grid_spec = cfg.get("grid", {"lo": 1e-6, "hi": 1e6, "n": 513})
    y_grid = _grid_from(grid_spec)
    n_x = int(cfg.get("x_points", 100))
    x_grid = np.geomspace(1e-2, 1e2, n_x)
    family = [
        ("log", UtilityFunction.log()),
        *((f"power(p={p})", UtilityFunction.power(p))
          for p in (-1.0, -0.5, 0.3, 0.5, 0.9)),
        *((f"exp(lam={lam})", UtilityFunction.exponential(lam))
          for lam in (0.5, 1.0, 2.0)),
    ]
    checks = []
    for name, u in family:
        pair = ConjugatePair(u)
        err = max(scaled_error(numeric_conjugate(u, y), pair.analytic(y))
                  for y in y_grid)
        checks.append((f"numeric-vs-analytic {name}", tol_a, err, err, err <= tol_a))
        bic = max(biconjugate_residual(pair, x, y_grid) for x in x_grid)
        checks.append((f"biconjugate {name}", tol_b, bic, bic, bic <= tol_b))
    return checks


def _exp_finite_duality(cfg: dict, cfg_dir: Path, seed: int) -> list:
    if "instance" not in cfg:
        raise ConfigError("finite-duality config needs an 'instance' path")
    inst_path = (cfg_dir / cfg["instance"]).resolve()
    if not inst_path.exists():
        raise ConfigError(f"instance file not found: {inst_path}")
    instance, priors, _ = load_instance(inst_path)
    tol = float(cfg.get("tolerance_gap", 1e-5))
    budgets = [float(x) for x in cfg.get("budgets", [1.0])]
    y_grid = _grid_from(cfg.get("y_grid", {}))
    polar = build_polar(instance, priors,
                        measure_class=cfg.get("measure_class", "all"))
    checks = []
    cert = check_no_arbitrage_assumption(priors, polar)
    checks.append(("abs-continuous-martingale-measure", 0.0,
                   float(cert.satisfied), 0.0 if cert.satisfied else 1.0,
                   cert.satisfied))
    bip = verify_bipolar(instance, priors, polar)
    checks.append(("bipolar-relation", 0.0, float(bip.passed),
                   0.0 if bip.passed else 1.0, bip.passed))
    if not cert.satisfied:
        return checks
    for uspec in cfg.get("utilities", [{"kind": "log"}]):
        u = _utility_from(uspec)
        label = uspec["kind"] + (f"(p={uspec['p']})" if "p" in uspec else "")
        for x in budgets:
            rep = duality_gap(instance, priors, polar, u, x, y_grid)
            ok = rep.residual <= tol and rep.certificates_consistent
            checks.append((f"duality-gap {label} x={x:g}", tol,
                           rep.u_value, rep.residual, ok))
    return checks


def _exp_diffusion_duality(cfg: dict, cfg_dir: Path, seed: int) -> list:
    theta = _theta_from(cfg["theta"])
    cert = validate_uncertainty_set(theta)
    checks = [("ellipticity", theta.ellipticity, cert.lambda_min,
               0.0 if cert.valid else 1.0, cert.valid)]
    if not cert.valid:
        return checks
    x = float(cfg.get("x", 1.0))
    y_grid = _grid_from(cfg.get("y_grid", {}))
    for uspec in cfg.get("utilities", [{"kind": "log"}]):
        u = _utility_from(uspec)
        tol = float(cfg.get("tolerance_log", 1e-6)) if uspec["kind"] == "log" \
            else float(cfg.get("tolerance_power", 1e-4))
        label = uspec["kind"] + (f"(p={uspec['p']})" if "p" in uspec else "")
        res = duality_identity_check(u, x, theta, y_grid)
        checks.append((f"duality-residual {label} x={x:g}", tol,
                       res["primal"], res["residual"], res["residual"] <= tol))
    return checks


def _exp_density_bounds(cfg: dict, cfg_dir: Path, seed: int) -> list:
    theta = _theta_from(cfg["theta"])
    paths = int(cfg.get("paths", 100_000))
    deltas = [float(d) for d in cfg.get("deltas", [1.5, 2.0, 3.0])]
    mc_delta = float(cfg.get("mc_delta", 2.0))
    sigma = float(cfg.get("mc_sigma", 4.0))
    checks = []
    for i, (b, c) in enumerate(zip(theta.b_generators, theta.c_generators)):
        for delta in deltas:
            rep = density_moment_check(theta, delta, b, c, analytic_only=True)
            checks.append((f"moment-bound gen{i} delta={delta:g}",
                           0.0, rep.analytic,
                           max(0.0, rep.analytic - rep.paper_bound),
                           rep.bound_holds))
        rep = density_moment_check(theta, mc_delta, b, c, n_paths=paths,
                                   seed=seed, mc_sigma=sigma)
        resid = abs(rep.mc_estimate - rep.analytic)
        checks.append((f"moment-mc gen{i} delta={mc_delta:g}",
                       sigma * rep.mc_se, rep.mc_estimate, resid,
                       rep.within_mc_tolerance))
    return checks


def _exp_separation_test(cfg: dict, cfg_dir: Path, seed: int) -> list:
    c = np.atleast_2d(np.asarray(cfg.get("c", [[0.04]]), dtype=float))
    d = c.shape[0]
    drift = float(cfg.get("drift", 0.05))
    paths = int(cfg.get("paths", 100_000))
    n_steps = int(cfg.get("n_steps", 100))
    sigma = float(cfg.get("mc_sigma", 4.0))
    horizon = float(cfg.get("horizon", 1.0))
    strategies = [
        StrategySpec("zero", label="zero"),
        StrategySpec("constant_units", vector=np.ones(d), label="constant-unit"),
        StrategySpec("stop_band", band=float(cfg.get("band", 0.1)),
                     label="stopped-band"),
        StrategySpec("constant_proportion", vector=np.ones(d),
                     label="constant-proportion"),
    ]
    q_batch = simulate_paths(None, np.zeros(d), c, n_steps=n_steps,
                             n_paths=paths, seed=seed, horizon=horizon)
    checks = []
    for rep in martingale_separation_test(q_batch, strategies, mc_sigma=sigma):
        checks.append((f"martingale {rep['label']}", sigma * rep["se"],
                       rep["mean_gains"], abs(rep["mean_gains"]),
                       rep["consistent_with_martingale"]))
    p_batch = simulate_paths(None, np.full(d, drift), c, n_steps=n_steps,
                             n_paths=paths, seed=seed, horizon=horizon)
    rep = martingale_separation_test(
        p_batch, [StrategySpec("constant_units", vector=np.ones(d),
                               label="constant-unit")], mc_sigma=sigma)[0]
    rejected = not rep["consistent_with_martingale"]
    checks.append((f"drifted rejects (b={drift:g})", sigma * rep["se"],
                   rep["mean_gains"], abs(rep["mean_gains"]), rejected))
    return checks


EXPERIMENTS = {
    "conjugate-suite": (
        _exp_conjugate_suite,
        "numeric-vs-analytic conjugates and biconjugation residuals",
        (),
    ),
    "density-bounds": (
        _exp_density_bounds,
        "Girsanov density-moment bounds, analytic and Monte Carlo",
        ("theta",),
    ),
    "diffusion-duality": (
        _exp_diffusion_duality,
        "robust Merton primal/dual conjugacy on an uncertainty hull",
        ("theta",),
    ),
    "finite-duality": (
        _exp_finite_duality,
        "exact primal/dual gap and bipolar checks on a finite market",
        ("instance",),
    ),
    "separation-test": (
        _exp_separation_test,
        "zero-mean gains under martingale measures, rejection under drift",
        (),
    ),
}


# ----------------------------------------------------------------------
# driver
# ----------------------------------------------------------------------

def run_experiment(exp_id: str, cfg_path: Path, seed_override, out_root: Path) -> int:
    if exp_id not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp_id!r} "
                          f"(see `robustdual list`)")
    cfg = load_config(cfg_path)
    func, _, required = EXPERIMENTS[exp_id]
    for fieldname in required:
        if fieldname not in cfg:
            raise ConfigError(f"{exp_id} config missing required field "
                              f"{fieldname!r}")
    seed = int(seed_override if seed_override is not None
               else cfg.get("seed", 0))
    cfg_for_hash = dict(cfg, seed=seed, experiment=exp_id)
    chash = config_hash(cfg_for_hash)

    start = time.perf_counter()
    raw_checks = func(cfg, cfg_path.parent, seed)
    wall = time.perf_counter() - start

    rows = [CheckRow(exp_id, chash, seed, name, tol, val, resid, ok)
            for (name, tol, val, resid, ok) in raw_checks]
    out_dir = out_root / exp_id
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "results.csv").write_text(render_csv(rows))
    tolerances = {k: v for k, v in cfg.items()
                  if isinstance(v, (int, float)) and k.startswith("tolerance")}
    (out_dir / "manifest.md").write_text(render_manifest(
        exp_id, chash, seed, tolerances, rows, wall, __version__))
    n_fail = sum(not r.passed for r in rows)
    status = "PASS" if n_fail == 0 else f"FAIL ({n_fail} checks)"
    print(f"{exp_id}: {len(rows)} checks, {status}; reports in {out_dir}")
    return EXIT_PASS if n_fail == 0 else EXIT_CHECK_FAILED


def cmd_run(args) -> int:
    out_root = Path(args.out or os.environ.get(OUTPUT_ROOT_ENV, "results"))
    configs = [Path(p) for p in args.config]
    if len(configs) == 1 and len(args.ids) > 1:
        configs = configs * len(args.ids)
    if len(configs) != len(args.ids):
        raise ConfigError("need one --config per experiment id")
    jobs = list(zip(args.ids, configs))
    codes = []
    if args.parallel and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
            futures = [pool.submit(run_experiment, eid, cfg, args.seed, out_root)
                       for eid, cfg in jobs]
            codes = [f.result() for f in futures]
    else:
        for eid, cfg in jobs:
            codes.append(run_experiment(eid, cfg, args.seed, out_root))
    return max(codes)


def cmd_list(args) -> int:
    for exp_id in sorted(EXPERIMENTS):
        _, desc, required = EXPERIMENTS[exp_id]
        req = ", ".join(required) if required else "none"
        print(f"{exp_id:20s} {desc} (required config fields: {req})")
    return EXIT_PASS


def cmd_validate_config(args) -> int:
    cfg_path = Path(args.path)
    cfg = load_config(cfg_path)
    exp_id = cfg.get("experiment")
    if exp_id not in EXPERIMENTS:
        raise ConfigError(f"config names unknown experiment {exp_id!r}")
    _, _, required = EXPERIMENTS[exp_id]
    for fieldname in required:
        if fieldname not in cfg:
            raise ConfigError(f"missing required field {fieldname!r}")
    if "instance" in cfg:
        ref = (cfg_path.parent / cfg["instance"]).resolve()
        if not ref.exists():
            raise ConfigError(f"referenced file not found: {ref}")
    print(f"{cfg_path}: valid {exp_id} config")
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustdual",
        description="robust utility-duality experiment driver")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one or more experiments")
    p_run.add_argument("ids", nargs="+", help="experiment id(s)")
    p_run.add_argument("--config", action="append", required=True,
                       help="config path (repeat per id, or one shared)")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None,
                       help=f"output root (default ${OUTPUT_ROOT_ENV} or ./results)")
    p_run.add_argument("--parallel", action="store_true",
                       help="run independent experiments concurrently")
    p_run.set_defaults(func=cmd_run)

    p_list = sub.add_parser("list", help="list registered experiments")
    p_list.set_defaults(func=cmd_list)

    p_val = sub.add_parser("validate-config", help="check a config file")
    p_val.add_argument("path")
    p_val.set_defaults(func=cmd_validate_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except (KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except (SolverError, LPFailure, ArbitrageError, RuntimeError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

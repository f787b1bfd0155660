"""Command-line front door: price, estimate, verify, simulate."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile

import numpy as np

from .errors import (
    FairnessUnreachable,
    InfeasibleFairness,
    NonConvergence,
    PricingEngineError,
    ScenarioParseError,
    TooLarge,
    ValidationError,
)
from .linear_pricing import linear_pricing
from .oracle import (
    SimulationConfig,
    brute_force_linear,
    brute_force_steady,
    check_incentive,
    sample_misreports,
    simulate_profits,
)
from .scenario import (
    ScenarioTable,
    estimate_pmf,
    expected_starting_price,
    format_pmf_csv,
    load_history_csv,
    load_scenario_file,
    profit_stats,
)
from .waterfill import waterlevel_pricing

SCHEMA_VERSION = 1
SCHEMES = ("waterlevel", "linear", "flat")

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_TOO_LARGE = 4
EXIT_NO_CONVERGENCE = 5

# Certification slack of the verify command, per scheme.
VERIFY_STEADY_MOMENT_SLACK = 1e-9
VERIFY_LINEAR_VARIANCE_SLACK = 1e-6
VERIFY_STEADY_INCENTIVE_SLACK = 1e-9
VERIFY_LINEAR_INCENTIVE_SLACK = 1e-6


def _digest(path: str) -> str:
    with open(path, "rb") as fh:
        return "sha256:" + hashlib.sha256(fh.read()).hexdigest()


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".steadyprice-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _emit(report: dict, output: str | None) -> None:
    text = json.dumps(report, indent=2) + "\n"
    if output:
        _write_atomic(output, text)
    else:
        sys.stdout.write(text)


def _error_exit(exc: Exception) -> int:
    if isinstance(exc, (FileNotFoundError, IsADirectoryError,
                        PermissionError)):
        payload = {"type": "FileError", "message": str(exc)}
        code = EXIT_INPUT
    elif isinstance(exc, ScenarioParseError):
        payload = {"type": "ScenarioParseError", "message": str(exc),
                   "path": exc.path, "line": exc.line, "column": exc.column}
        code = EXIT_INPUT
    elif isinstance(exc, InfeasibleFairness):
        payload = {"type": "InfeasibleFairness", "message": str(exc),
                   "target": exc.target, "retrievable": exc.retrievable,
                   "shortfall": exc.shortfall}
        code = EXIT_INFEASIBLE
    elif isinstance(exc, FairnessUnreachable):
        payload = {"type": "FairnessUnreachable", "message": str(exc),
                   "residual": exc.residual, "big_m": exc.big_m}
        code = EXIT_INFEASIBLE
    elif isinstance(exc, TooLarge):
        payload = {"type": "TooLarge", "message": str(exc)}
        code = EXIT_TOO_LARGE
    elif isinstance(exc, NonConvergence):
        payload = {"type": "NonConvergence", "message": str(exc)}
        code = EXIT_NO_CONVERGENCE
    elif isinstance(exc, (ValidationError, ValueError)):
        payload = {"type": type(exc).__name__, "message": str(exc)}
        code = EXIT_INPUT
    else:
        payload = {"type": type(exc).__name__, "message": str(exc)}
        code = EXIT_CHECKS_FAILED
    sys.stderr.write(json.dumps({"error": payload}) + "\n")
    return code


def _parse_rho(text: str) -> list[float]:
    try:
        rhos = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"could not parse rho list {text!r}") from None
    if not rhos or any(r <= 1.0 for r in rhos):
        raise ValueError("every rho must be a number > 1")
    return rhos


def _price_table(table: ScenarioTable, scheme: str,
                 allow_negative_level: bool):
    """Per-row prices plus a serializable description of the function."""
    warnings: list[str] = []
    if scheme == "waterlevel":
        priced = waterlevel_pricing(
            table, allow_negative_level=allow_negative_level)
        if priced.level < 0:
            warnings.append(
                "level is negative: some rows are charged above revenue "
                "and the risk-free guarantee does not hold"
            )
        section = {
            "kind": "tabulated",
            "level": priced.level,
            "rows": [float(x) for x in priced.prices],
        }
        return np.asarray(priced.prices), section, warnings
    if scheme == "linear":
        fitted = linear_pricing(table)
        section = {
            "kind": "linear",
            "coefficients": [float(c) for c in fitted.coefficients],
            "achieved_variance": fitted.achieved_variance,
            "fairness_residual": fitted.fairness_residual,
            "big_m_used": fitted.big_m_used,
        }
        return np.asarray(fitted.evaluate(table.demands)), section, warnings
    if scheme == "flat":
        flat = expected_starting_price(table)
        section = {
            "kind": "flat",
            "price": flat,
            "rows": [flat] * table.n_rows,
        }
        return np.full(table.n_rows, flat), section, warnings
    raise ValueError(f"unknown scheme {scheme!r}")


def _base_report(command: str, scheme: str | None, path: str,
                 table: ScenarioTable | None) -> dict:
    report: dict = {"schema_version": SCHEMA_VERSION, "command": command}
    if scheme is not None:
        report["scheme"] = scheme
    report["input"] = {
        "file": os.path.basename(path),
        "digest": _digest(path),
    }
    if table is not None:
        report["input"]["rows"] = table.n_rows
        report["input"]["resources"] = table.n_resources
    return report


def _prices_csv(table: ScenarioTable, prices: np.ndarray) -> str:
    m = table.n_resources
    header = [f"r_{i + 1}" for i in range(m)] + ["f", "q", "v", "price"]
    lines = [",".join(header)]
    for k in range(table.n_rows):
        cells = [repr(float(x)) for x in table.demands[k]]
        cells += [repr(float(table.mass[k])),
                  repr(float(table.starting_price[k])),
                  repr(float(table.revenue[k])),
                  repr(float(prices[k]))]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_price(args) -> int:
    table = load_scenario_file(args.input)
    prices, section, warnings = _price_table(
        table, args.scheme, args.allow_negative_level)
    stats = profit_stats(table, prices, rho_set=args.rho)
    report = _base_report("price", args.scheme, args.input, table)
    report["price"] = section
    report["report"] = stats.to_dict()
    report["warnings"] = warnings
    _emit(report, args.output)
    if args.csv:
        _write_atomic(args.csv, _prices_csv(table, prices))
    return EXIT_OK


def cmd_estimate(args) -> int:
    history = load_history_csv(args.input)
    pmf = estimate_pmf(history)
    text = format_pmf_csv(pmf)
    if args.output:
        _write_atomic(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _verify_waterlevel(table: ScenarioTable, args) -> list[dict]:
    checks = []
    priced = waterlevel_pricing(table)
    stats = profit_stats(table, priced.prices, rho_set=args.rho)
    oracle = brute_force_steady(table, args.grid_step, rho_set=args.rho)

    for rho, oracle_moment in sorted(oracle.moments_by_rho.items()):
        ours = stats.rho_moments[rho]
        checks.append({
            "name": f"moment_not_worse_rho_{rho:g}",
            "passed": bool(ours <= oracle_moment
                           + VERIFY_STEADY_MOMENT_SLACK),
            "measured": ours - oracle_moment,
            "allowed": VERIFY_STEADY_MOMENT_SLACK,
        })
    distance = float(np.max(np.abs(
        oracle.prices_by_rho[2.0] - priced.prices)))
    slack = args.grid_step * (table.n_rows + 1)
    checks.append({
        "name": "grid_best_near_solution",
        "passed": bool(distance <= slack),
        "measured": distance,
        "allowed": slack,
    })
    checks.append({
        "name": "max_min_profit",
        "passed": bool(stats.min_profit
                       >= oracle.max_min_profit - VERIFY_STEADY_MOMENT_SLACK),
        "measured": oracle.max_min_profit - stats.min_profit,
        "allowed": VERIFY_STEADY_MOMENT_SLACK,
    })
    profit = table.revenue - priced.prices
    positive = priced.prices > 0
    structure_gap = 0.0
    if positive.any():
        structure_gap = float(np.max(np.abs(profit[positive]
                                            - priced.level)))
    if (~positive).any():
        structure_gap = max(
            structure_gap,
            float(np.max(profit[~positive] - priced.level)))
    checks.append({
        "name": "level_structure",
        "passed": bool(structure_gap <= 1e-12),
        "measured": structure_gap,
        "allowed": 1e-12,
    })
    checks.append(_incentive_check(table, "waterlevel", args,
                                   VERIFY_STEADY_INCENTIVE_SLACK))
    return checks


def _verify_linear(table: ScenarioTable, args) -> list[dict]:
    checks = []
    fitted = linear_pricing(table)
    oracle = brute_force_linear(table)
    gap = abs(fitted.achieved_variance - oracle.variance)
    checks.append({
        "name": "variance_matches_enumeration",
        "passed": bool(gap <= VERIFY_LINEAR_VARIANCE_SLACK),
        "measured": gap,
        "allowed": VERIFY_LINEAR_VARIANCE_SLACK,
    })
    bound = 1e-7 * max(1.0, expected_starting_price(table))
    checks.append({
        "name": "fairness_residual",
        "passed": bool(fitted.fairness_residual <= bound),
        "measured": fitted.fairness_residual,
        "allowed": bound,
    })
    checks.append(_incentive_check(table, "linear", args,
                                   VERIFY_LINEAR_INCENTIVE_SLACK))
    return checks


def _incentive_check(table: ScenarioTable, scheme: str, args,
                     slack: float) -> dict:
    rng = np.random.default_rng(args.seed)
    misreports = sample_misreports(table, args.misreports, rng)
    worst = -np.inf
    for row in misreports:
        truthful, misreported = check_incentive(table, row, scheme)
        worst = max(worst, truthful - misreported)
    return {
        "name": "incentive_compatible",
        "passed": bool(worst <= slack),
        "measured": worst,
        "allowed": slack,
        "misreports": int(args.misreports),
    }


def cmd_verify(args) -> int:
    table = load_scenario_file(args.input)
    if args.scheme == "waterlevel":
        checks = _verify_waterlevel(table, args)
    elif args.scheme == "linear":
        checks = _verify_linear(table, args)
    else:
        raise ValueError("verify supports the waterlevel and linear schemes")
    report = _base_report("verify", args.scheme, args.input, table)
    report["grid_step"] = args.grid_step
    report["seed"] = args.seed
    report["checks"] = checks
    report["passed"] = all(c["passed"] for c in checks)
    _emit(report, args.output)
    return EXIT_OK if report["passed"] else EXIT_CHECKS_FAILED


def cmd_simulate(args) -> int:
    table = load_scenario_file(args.input)
    prices, section, warnings = _price_table(
        table, args.scheme, args.allow_negative_level)
    config = SimulationConfig(draws=args.draws, seed=args.seed,
                              budget=args.budget, episodes=args.episodes)
    result = simulate_profits(table, prices, config)
    stats = profit_stats(table, prices)
    report = _base_report("simulate", args.scheme, args.input, table)
    report["price"] = section
    report["analytic"] = {
        "expected_profit_mu": stats.expected_profit_mu,
        "variance": stats.variance,
        "min_profit": stats.min_profit,
    }
    report["simulation"] = result.to_dict()
    report["warnings"] = warnings
    _emit(report, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steadyprice",
        description="Performance-based pricing: fair price functions that "
                    "keep provider revenue fixed while trimming customer "
                    "profit risk.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, schemes=SCHEMES):
        p.add_argument("--scheme", choices=schemes, required=True)
        p.add_argument("--input", required=True,
                       help="scenario file (.csv or .json)")
        p.add_argument("--output", default=None,
                       help="write the JSON report here instead of stdout")
        p.add_argument("--allow-negative-level", action="store_true",
                       dest="allow_negative_level",
                       help="price infeasible tables by letting the "
                            "water level go negative")

    price = sub.add_parser("price", help="compute a price function")
    add_common(price)
    price.add_argument("--rho", type=_parse_rho, default=list((1.5, 2.0, 3.0)),
                       help="comma-separated deviation exponents (> 1)")
    price.add_argument("--csv", default=None,
                       help="also export tabulated prices as CSV")
    price.set_defaults(func=cmd_price)

    estimate = sub.add_parser(
        "estimate", help="estimate a demand pmf from a history CSV")
    estimate.add_argument("--input", required=True,
                          help="history file with header r_1,...,r_m")
    estimate.add_argument("--output", default=None,
                          help="write the pmf CSV here instead of stdout")
    estimate.set_defaults(func=cmd_estimate)

    verify = sub.add_parser(
        "verify", help="certify a scheme against exhaustive oracles")
    add_common(verify, schemes=("waterlevel", "linear"))
    verify.add_argument("--grid-step", type=float, default=0.01,
                        dest="grid_step")
    verify.add_argument("--misreports", type=int, default=100)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--rho", type=_parse_rho,
                        default=list((1.5, 2.0, 3.0)))
    verify.set_defaults(func=cmd_verify)

    simulate = sub.add_parser(
        "simulate", help="Monte Carlo profit and ruin simulation")
    add_common(simulate)
    simulate.add_argument("--draws", type=int, required=True,
                          help="episode length in demand draws")
    simulate.add_argument("--seed", type=int, required=True)
    simulate.add_argument("--budget", type=float, required=True,
                          help="starting capital of each episode")
    simulate.add_argument("--episodes", type=int, default=1000)
    simulate.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PricingEngineError as exc:
        return _error_exit(exc)
    except (OSError, ValueError) as exc:
        return _error_exit(exc)


if __name__ == "__main__":
    sys.exit(main())

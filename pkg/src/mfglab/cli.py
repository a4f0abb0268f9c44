"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 at least one solver did
not converge (results are still written).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConfigError
from .harness import (
    RESULT_COLUMNS,
    SCHEMA_VERSION,
    _fmt,
    build_problem,
    emit_plotdata,
    fit_scaling,
    load_config,
    read_rows,
    run,
)
from .mfg import solve_mfg
from .planner import solve_planner_descent, solve_planner_system

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3


def _write_row(path: str | Path, columns: list[str], values: list) -> None:
    with open(path, "w") as fh:
        fh.write(f"# schema={SCHEMA_VERSION}\n")
        fh.write(",".join(columns) + "\n")
        fh.write(",".join(_fmt(v) for v in values) + "\n")


def _cmd_solve_mfg(cfg: dict, out: str) -> int:
    from .efficiency import social_cost

    problem, params, _ = build_problem(cfg)
    sol = solve_mfg(problem, params)
    _write_row(out,
               ["converged", "iterations", "fp_residual", "hjb_residual",
                "fpk_residual", "cost_mfg"],
               [sol.converged, sol.iterations, sol.fp_residual, sol.hjb_residual,
                sol.fpk_residual, social_cost(sol, problem)])
    return EXIT_OK if sol.converged else EXIT_NOT_CONVERGED


def _cmd_solve_planner(cfg: dict, out: str) -> int:
    problem, params, _ = build_problem(cfg)
    system = solve_planner_system(problem, params)
    descent = solve_planner_descent(problem, params)
    _write_row(out,
               ["cost_system", "cost_descent", "abs_difference",
                "system_converged", "descent_converged",
                "system_iterations", "descent_iterations"],
               [system.cost, descent.cost, abs(system.cost - descent.cost),
                system.converged, descent.converged,
                system.iterations, descent.iterations])
    ok = system.converged and descent.converged
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def _rows_converged(rows: list[dict]) -> bool:
    return all(r["mfg_converged"] and r["system_converged"] and r["descent_converged"]
               for r in rows)


def _cmd_report(cfg: dict, out: str) -> int:
    cfg = dict(cfg)
    cfg.pop("sweep", None)
    rows = run(cfg, out)
    return EXIT_OK if _rows_converged(rows) else EXIT_NOT_CONVERGED


def _cmd_sweep(cfg: dict, out: str) -> int:
    rows = run(cfg, out)
    return EXIT_OK if _rows_converged(rows) else EXIT_NOT_CONVERGED


def _cmd_fit(cfg: dict, rows_path: str, out: str) -> int:
    section = cfg.get("fit")
    if not isinstance(section, dict):
        raise ConfigError("fit: missing section with x_column / y_column")
    for key in ("x_column", "y_column"):
        if key not in section:
            raise ConfigError(f"fit.{key}: missing required field")
        if section[key] not in RESULT_COLUMNS:
            raise ConfigError(f"fit.{key}: unknown column {section[key]!r}")
    tol = section.get("tolerance", 1e-8)
    if not isinstance(tol, (int, float)) or tol < 0:
        raise ConfigError(f"fit.tolerance: expected a nonnegative number, got {tol!r}")
    rows = read_rows(rows_path)
    res = fit_scaling(rows, section["x_column"], section["y_column"], tolerance=tol)
    _write_row(out, ["slope", "intercept", "r2", "n_used", "degenerate"],
               [res.slope, res.intercept, res.r2, res.n_used, res.degenerate])
    return EXIT_OK


def _cmd_emit(cfg: dict, rows_path: str, out: str) -> int:
    section = cfg.get("emit")
    if not isinstance(section, dict) or "series" not in section:
        raise ConfigError("emit.series: missing required field")
    series = []
    for i, pair in enumerate(section["series"]):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigError(f"emit.series[{i}]: expected a [x_column, y_column] pair")
        for col in pair:
            if col not in RESULT_COLUMNS:
                raise ConfigError(f"emit.series[{i}]: unknown column {col!r}")
        series.append((pair[0], pair[1]))
    emit_plotdata(read_rows(rows_path), series, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfglab",
        description="Mean field game equilibria vs. the global planner: "
                    "solve, report inefficiency gaps, sweep and fit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("solve-mfg", "solve the equilibrium system for one config point"),
        ("solve-planner", "compute the planner optimum by both routes"),
        ("report", "full efficiency report for one config point"),
        ("sweep", "run the configured parameter sweep"),
        ("fit", "log-log scaling fit over a result file"),
        ("emit", "emit plain-text plot series from a result file"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", required=True, help="output path (directory for emit)")
        if name in ("fit", "emit"):
            p.add_argument("--rows", required=True, dest="rows",
                           help="result CSV produced by sweep/report")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "solve-mfg":
            return _cmd_solve_mfg(cfg, args.out)
        if args.command == "solve-planner":
            return _cmd_solve_planner(cfg, args.out)
        if args.command == "report":
            return _cmd_report(cfg, args.out)
        if args.command == "sweep":
            return _cmd_sweep(cfg, args.out)
        if args.command == "fit":
            return _cmd_fit(cfg, args.rows, args.out)
        if args.command == "emit":
            return _cmd_emit(cfg, args.rows, args.out)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

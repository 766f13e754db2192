"""Command-line entry point: ``run``, ``validate`` and ``best-beta``.

Exit codes: 0 success, 1 invalid input (configuration, missing grid points
or failed oracle checks under ``--strict``), 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig
from .rmt import ConvergenceError
from .runner import GridError, NumericalError, best_beta, read_rows, run
from .validate import DEFAULT_SCENARIO, run_suite

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    result = run(cfg, workers=args.workers)
    print(f"{len(result.rows)} rows -> {result.csv_path}")
    print(f"summary -> {result.summary_path}")
    return EXIT_OK


def _validate_params(path: str | None) -> dict:
    if path is None:
        return {}
    data = json.loads(Path(path).read_text())
    data = data.get("validate", data)
    params = {}
    for key in DEFAULT_SCENARIO:
        if key in data:
            value = data[key]
            params[key] = value[0] if isinstance(value, list) else value
    return params


def _cmd_validate(args) -> int:
    checks = run_suite(_validate_params(args.config))
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_INVALID if failed and args.strict else EXIT_OK


def _cmd_best_beta(args) -> int:
    rows = read_rows(args.results)
    if args.scheme:
        rows = [r for r in rows if r["scheme"] == args.scheme]
    table = best_beta(rows)
    print("scheme,M,K,beta_f,best_beta,sum_se")
    for t in table:
        print(f"{t['scheme']},{t['M']},{t['K']},{t['beta_f']:g},{t['best_beta']},{t['sum_se']:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcmimo", description="Multi-cell massive MIMO downlink simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a parameter sweep from a JSON config")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: config or CPU count)")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("validate", help="run the built-in oracle checks")
    p.add_argument("config", nargs="?", help="optional JSON with M, K, beta, n_realizations, master_seed")
    p.add_argument("--strict", action="store_true", help="exit 1 if any check fails")
    p.set_defaults(func=_cmd_validate)
    p = sub.add_parser("best-beta", help="best pilot reuse factor per (scheme, M, K, beta_f)")
    p.add_argument("results", help="result CSV written by 'run'")
    p.add_argument("--scheme", default=None)
    p.set_defaults(func=_cmd_best_beta)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, GridError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, ConvergenceError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

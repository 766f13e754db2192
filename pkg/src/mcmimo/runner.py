"""Sweep execution, result rows and figure-ready summaries.

Work is split into units of one (sweep point, drop).  Units run in a process
pool and come back in submission order, so the CSV is written by a single
writer in a fixed order whatever the worker count.  Wall times go to a
separate sidecar file to keep the CSV byte-identical between runs.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, SweepPoint, drop_seed, fading_seed, pilot_seed
from .geometry import build_hex_network, make_drop
from .mc_eval import evaluate
from .precoding import Scheme
from .rmt import ConvergenceError, large_scale_sinr
from .scenario import ScenarioState, standard_scenario

log = logging.getLogger(__name__)

DE_SCHEME = "m-mmse-de"

ROW_FIELDS = [
    "label", "point", "drop", "scheme", "method", "status",
    "M", "K", "beta", "beta_f", "B", "S", "prelog",
    "sum_se_mean", "sum_se_center", "se_p5", "se_p50", "se_p95",
    "n_realizations", "mc_mode", "master_seed", "seed_key",
    "r", "kappa", "sigma_sf_sq", "rho_ul_db", "edge_snr_db",
]  # fmt: skip

SUMMARY_FIELDS = [
    "scheme", "M", "K", "beta", "beta_f", "B", "n_drops",
    "sum_se_median", "sum_se_mean", "sum_se_std", "sum_se_center_median",
]  # fmt: skip


class NumericalError(RuntimeError):
    """A sweep unit failed for numerical reasons (singular solve, no convergence, ...)."""


@dataclass(frozen=True)
class RunResult:
    rows: list
    csv_path: Path
    json_path: Path
    summary_path: Path
    timing_path: Path


def _se_stats(se: np.ndarray) -> dict:
    sum_se = se.sum(axis=1)
    p5, p50, p95 = np.percentile(se, [5, 50, 95])
    return {
        "sum_se_mean": float(sum_se.mean()),
        "sum_se_center": float(sum_se[0]),
        "se_p5": float(p5),
        "se_p50": float(p50),
        "se_p95": float(p95),
    }


def _empty_stats() -> dict:
    return dict.fromkeys(("sum_se_mean", "sum_se_center", "se_p5", "se_p50", "se_p95"), float("nan"))


def _base_row(cfg: ExperimentConfig, point: SweepPoint, drop_idx: int) -> dict:
    return {
        "label": cfg.label, "point": point.index, "drop": drop_idx,
        "M": point.M, "K": point.K, "beta": point.beta, "beta_f": point.beta_f, "B": point.B, "S": cfg.S,
        "prelog": 1.0 - point.B / cfg.S, "n_realizations": cfg.n_realizations, "mc_mode": cfg.mc_mode,
        "master_seed": cfg.master_seed, "seed_key": f"{cfg.master_seed}/{point.K}/{point.index}/{drop_idx}",
        "r": cfg.r, "kappa": cfg.kappa, "sigma_sf_sq": cfg.sigma_sf_sq,
        "rho_ul_db": cfg.rho_ul_db, "edge_snr_db": cfg.edge_snr_db,
    }  # fmt: skip


def _infeasible_rows(cfg: ExperimentConfig, point: SweepPoint, drop_idx: int) -> list:
    """Placeholder rows for a point whose pilots use up the whole coherence block."""
    base = _base_row(cfg, point, drop_idx)
    names = [Scheme.parse(s).value for s in cfg.schemes] + ([DE_SCHEME] if cfg.deterministic_equivalent else [])
    return [
        {**base, "scheme": name, "method": "de" if name == DE_SCHEME else "mc", "status": "infeasible", **_empty_stats()}
        for name in names
    ]


def unit_scenario(cfg: ExperimentConfig, point: SweepPoint, drop_idx: int) -> ScenarioState:
    """Large-scale state of one (sweep point, drop), rebuilt from the seed rule alone."""
    net = build_hex_network(cfg.r)
    drop = make_drop(
        net, point.K, np.random.default_rng(drop_seed(cfg.master_seed, point.K, drop_idx)),
        kappa=cfg.kappa, shadow_var_db2=cfg.sigma_sf_sq,
    )  # fmt: skip
    _, sc = standard_scenario(
        net, point.K, point.beta, np.random.default_rng(pilot_seed(cfg.master_seed, point.K, drop_idx)),
        beta_f=point.beta_f, kappa=cfg.kappa, rho_ul_db=cfg.rho_ul_db, edge_snr_db=cfg.edge_snr_db, drop=drop,
    )  # fmt: skip
    return sc


def run_unit(cfg: ExperimentConfig, point: SweepPoint, drop_idx: int) -> tuple[list, float]:
    """All rows of one (sweep point, drop): MC for each scheme plus the large-scale row."""
    start = time.perf_counter()
    if point.B >= cfg.S:
        return _infeasible_rows(cfg, point, drop_idx), time.perf_counter() - start
    sc = unit_scenario(cfg, point, drop_idx)
    prelog = sc.alloc.prelog(cfg.S)
    base = _base_row(cfg, point, drop_idx)
    schemes = [Scheme.parse(s) for s in cfg.schemes]
    feasible = [s for s in schemes if not (s is Scheme.M_ZF and point.M <= sc.B)]
    try:
        reports = {}
        if feasible:
            rng = np.random.default_rng(fading_seed(cfg.master_seed, point.index, drop_idx))
            reports = evaluate(sc, point.M, feasible, cfg.n_realizations, rng, cfg.S, cfg.mc_mode, cfg.batch)
        de = large_scale_sinr(sc, point.M) if cfg.deterministic_equivalent else None
    except (ArithmeticError, ConvergenceError, np.linalg.LinAlgError) as exc:
        raise NumericalError(f"sweep point {point.index} drop {drop_idx}: {exc}") from exc
    rows = []
    for s in schemes:
        if s in reports:
            stats, status = _se_stats(reports[s].se), "ok"
        else:
            stats, status = _empty_stats(), "infeasible"
        rows.append({**base, "scheme": s.value, "method": "mc", "status": status, **stats})
    if de is not None:
        rows.append({**base, "scheme": DE_SCHEME, "method": "de", "status": "ok", "n_realizations": 0, **_se_stats(de.se(prelog))})
    return rows, time.perf_counter() - start


def _run_unit_star(args):
    return run_unit(*args)


def execute(cfg: ExperimentConfig, workers: int | None = None) -> tuple[list, list]:
    """Run every unit; returns rows in canonical order and per-unit timings."""
    units = [(cfg, p, d) for p in cfg.sweep_points() for d in range(cfg.n_drops)]
    workers = workers or cfg.workers or os.cpu_count() or 1
    log.info("%d units on %d worker(s)", len(units), workers)
    if workers == 1:
        results = map(_run_unit_star, units)
        return _collect(units, results)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return _collect(units, pool.map(_run_unit_star, units))


def _collect(units, results) -> tuple[list, list]:
    rows, timings = [], []
    for (_, point, d), (unit_rows, seconds) in zip(units, results):
        rows.extend(unit_rows)
        timings.append({"point": point.index, "drop": d, "seconds": seconds})
        log.debug("point %d drop %d: %.2f s", point.index, d, seconds)
    return rows, timings


def _fmt(value) -> str:
    if isinstance(value, float):
        return "" if np.isnan(value) else format(value, ".10g")
    return str(value)


def write_csv(rows: list, path: Path, fields_: list = ROW_FIELDS) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields_)
        for row in rows:
            writer.writerow([_fmt(row[f]) for f in fields_])


def _json_safe(value):
    if isinstance(value, float) and np.isnan(value):
        return None
    return value


def summarize(rows: list) -> list:
    """Per (scheme, M, K, beta, beta_f): statistics of the cell-averaged sum SE over drops."""
    groups = defaultdict(list)
    for row in rows:
        if row["status"] == "ok":
            groups[(row["scheme"], row["M"], row["K"], row["beta"], row["beta_f"], row["B"])].append(row)
    out = []
    for key in sorted(groups):
        vals = np.array([r["sum_se_mean"] for r in groups[key]])
        center = np.array([r["sum_se_center"] for r in groups[key]])
        out.append(
            dict(
                zip(SUMMARY_FIELDS[:6], key),
                n_drops=len(vals),
                sum_se_median=float(np.median(vals)),
                sum_se_mean=float(vals.mean()),
                sum_se_std=float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
                sum_se_center_median=float(np.median(center)),
            )
        )
    return out


def run(cfg: ExperimentConfig, workers: int | None = None) -> RunResult:
    out_dir = cfg.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.time()
    rows, timings = execute(cfg, workers)
    csv_path = out_dir / f"{cfg.label}.csv"
    json_path = out_dir / f"{cfg.label}.json"
    summary_path = out_dir / f"{cfg.label}_summary.csv"
    timing_path = out_dir / f"{cfg.label}_timing.json"
    write_csv(rows, csv_path)
    json_path.write_text(
        json.dumps(
            {"config": cfg.to_dict(), "rows": [{k: _json_safe(r[k]) for k in ROW_FIELDS} for r in rows]},
            indent=1,
        )
        + "\n"
    )
    write_csv(summarize(rows), summary_path, SUMMARY_FIELDS)
    timing_path.write_text(
        json.dumps(
            {
                "started_unix": start,
                "total_seconds": time.time() - start,
                "units": timings,
            },
            indent=1,
        )
        + "\n"
    )
    return RunResult(rows, csv_path, json_path, summary_path, timing_path)


# --- best pilot reuse factor -----------------------------------------------------


class GridError(ValueError):
    """Results do not cover the full beta grid."""


def read_rows(path: str | Path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def best_beta(rows: list) -> list:
    """Argmax over beta of the drop-averaged sum SE per (scheme, M, K, beta_f).

    Ties go to the smaller beta.  Infeasible entries count as present but can
    never win.  Raises :class:`GridError` when some beta is missing for a
    group that other groups have.
    """
    per = defaultdict(lambda: defaultdict(list))
    betas = set()
    for row in rows:
        beta = int(row["beta"])
        betas.add(beta)
        key = (row["scheme"], int(row["M"]), int(row["K"]), float(row["beta_f"]))
        value = row["sum_se_mean"]
        ok = row.get("status", "ok") == "ok" and value not in ("", None)
        per[key][beta].append(float(value) if ok else float("-inf"))
    if not per:
        raise GridError("no result rows")
    table = []
    for key in sorted(per):
        missing = sorted(betas - set(per[key]))
        if missing:
            raise GridError(f"scheme={key[0]} M={key[1]} K={key[2]} beta_f={key[3]}: no rows for beta {missing}")
        best, best_value = None, float("-inf")
        for beta in sorted(per[key]):
            value = float(np.mean(per[key][beta]))
            if value > best_value:
                best, best_value = beta, value
        if best is None:
            raise GridError(f"scheme={key[0]} M={key[1]} K={key[2]} beta_f={key[3]}: every beta is infeasible")
        table.append(
            {"scheme": key[0], "M": key[1], "K": key[2], "beta_f": key[3], "best_beta": best, "sum_se": best_value}
        )
    return table

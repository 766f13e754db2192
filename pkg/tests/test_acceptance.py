"""Acceptance criteria at their stated tolerances.

Every test records one PASS/FAIL line that is printed in the terminal summary.
Sweeps run through the same runner and seed rule as ``mcmimo run``.
"""

from collections import defaultdict

import numpy as np
import pytest
from conftest import record_acceptance

from mcmimo.channel import complex_normal
from mcmimo.config import ExperimentConfig
from mcmimo.geometry import build_hex_network, make_drop
from mcmimo.mc_eval import evaluate
from mcmimo.precoding import Scheme
from mcmimo.rmt import (
    FixedPointConfig,
    large_scale_sinr,
    resolvent_fixed_point,
    scalar_fixed_point,
    scalar_second_order,
    second_order_equivalent,
)
from mcmimo.runner import DE_SCHEME, best_beta, execute, run, unit_scenario
from mcmimo.scenario import standard_scenario
from mcmimo.validate import check_estimation_moments, check_zf_nulling

SEED = 2016
BETAS = [1, 3, 4, 7]

pytestmark = pytest.mark.acceptance


def _sweep(**kwargs):
    cfg = ExperimentConfig.from_dict({"master_seed": SEED, "workers": 1, **kwargs})
    rows, _ = execute(cfg, workers=1)
    return cfg, rows


def _per_drop(rows, **match):
    """Cell-averaged sum SE per drop for rows matching ``match``, ordered by drop."""
    sel = [r for r in rows if all(r[k] == v for k, v in match.items())]
    sel.sort(key=lambda r: r["drop"])
    return np.array([r["sum_se_mean"] for r in sel])


# 1 --------------------------------------------------------------------------------


def test_criterion_1_mc_vs_large_scale_agreement():
    M, K, beta, n_drops, n_real = 100, 10, 4, 20, 2000
    net = build_hex_network()
    gaps, mc_sum, de_sum = [], [], []
    for d in range(n_drops):
        drop = make_drop(net, K, np.random.default_rng([SEED, 1, d]))
        _, sc = standard_scenario(net, K, beta, np.random.default_rng([SEED, 2, d]), drop=drop)
        mc = evaluate(sc, M, [Scheme.M_MMSE], n_real, np.random.default_rng([SEED, 3, d]), 500)[Scheme.M_MMSE]
        de = large_scale_sinr(sc, M)
        gaps.append(np.abs(de.sinr - mc.sinr) / mc.sinr)
        mc_sum.append(mc.mean_sum_se)
        de_sum.append(de.se(mc.prelog).sum(axis=1).mean())
    median_gap = float(np.median(np.concatenate(gaps)))
    sum_gap = abs(np.mean(de_sum) - np.mean(mc_sum)) / np.mean(mc_sum)
    ok = median_gap <= 0.05 and sum_gap <= 0.03
    record_acceptance(
        "1", ok,
        f"median per-user SINR gap {median_gap:.2%} (<= 5%), sum-SE gap {sum_gap:.2%} (<= 3%); "
        f"MC {np.mean(mc_sum):.2f} vs large-scale {np.mean(de_sum):.2f} bit/s/Hz/cell",
    )  # fmt: skip
    assert ok


# 2 --------------------------------------------------------------------------------


def test_criterion_2_monotone_in_beta():
    _, rows = _sweep(M=[200], K=[10], beta=BETAS, schemes=["m-mmse"], n_drops=10, n_realizations=300,
                     deterministic_equivalent=False)  # fmt: skip
    se = {b: _per_drop(rows, beta=b, scheme="m-mmse") for b in BETAS}
    n = len(se[1])
    parts, ok = [], True
    for lo, hi in zip(BETAS[:-1], BETAS[1:]):
        diff = se[hi] - se[lo]  # common drops: paired differences
        err = 2 * diff.std(ddof=1) / np.sqrt(n)
        resolved = diff.mean() > err
        ok &= bool(resolved)
        parts.append(f"beta {hi} - beta {lo} = {diff.mean():.2f} +- {err:.2f}")
    means = ", ".join(f"beta={b}: {se[b].mean():.2f}" for b in BETAS)
    record_acceptance("2", ok, f"{means}; {'; '.join(parts)}")
    assert ok


# 3 --------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def fig2_rows():
    _, rows = _sweep(M=[50, 100, 200], K=[10, 30], beta=[4], schemes=["m-mmse", "s-mmse", "m-zf", "mf"],
                     skip_infeasible=True, n_drops=5, n_realizations=200, deterministic_equivalent=False)  # fmt: skip
    return rows


def test_criterion_3_scheme_ordering(fig2_rows):
    rows = fig2_rows
    mean = defaultdict(dict)
    for r in rows:
        if r["status"] == "ok":
            mean[(r["M"], r["K"])].setdefault(r["scheme"], []).append(r["sum_se_mean"])
    mean = {key: {s: float(np.mean(v)) for s, v in d.items()} for key, d in mean.items()}
    ratio10 = mean[(200, 10)]["m-mmse"] / mean[(200, 10)]["s-mmse"]
    ratio30 = mean[(200, 30)]["m-mmse"] / mean[(200, 30)]["s-mmse"]
    mf_lowest = all(d["mf"] < min(v for s, v in d.items() if s != "mf") for d in mean.values())
    ok = ratio10 >= 1.05 and ratio30 >= 1.12 and mf_lowest
    record_acceptance(
        "3", ok,
        f"M-MMSE/S-MMSE at M=200: K=10 {ratio10:.3f} (>= 1.05), K=30 {ratio30:.3f} (>= 1.12); "
        f"MF lowest at every (M, K) in {sorted(mean)}: {mf_lowest}",
    )  # fmt: skip
    assert ok


# 4 and 5 ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def fig3_rows():
    _, rows = _sweep(M=[200], K=[10, 50, 90, 120], beta=BETAS, schemes=["m-zf"], skip_infeasible=True,
                     n_drops=4, n_realizations=100)  # fmt: skip
    return rows


def _best(rows, scheme):
    table = best_beta([{**r, "sum_se_mean": "" if r["status"] != "ok" else r["sum_se_mean"]} for r in rows if r["scheme"] == scheme])
    return {t["K"]: (t["best_beta"], t["sum_se"]) for t in table}


def test_criterion_4_m_zf_collapse(fig3_rows):
    zf = _best(fig3_rows, "m-zf")
    mmse = _best(fig3_rows, DE_SCHEME)
    zf_drop = zf[90][1] < zf[50][1]
    mmse_rise = mmse[90][1] > mmse[50][1]
    ok = zf_drop and mmse_rise
    record_acceptance(
        "4", ok,
        f"M-ZF best-beta sum SE K=50 {zf[50][1]:.1f} (beta={zf[50][0]}) -> K=90 {zf[90][1]:.1f} (beta={zf[90][0]}), "
        f"drop required: {zf_drop}; M-MMSE K=50 {mmse[50][1]:.1f} (beta={mmse[50][0]}) -> K=90 {mmse[90][1]:.1f} "
        f"(beta={mmse[90][0]}), rise required: {mmse_rise}",
    )  # fmt: skip
    assert ok


def test_criterion_5_best_beta_table(fig3_rows):
    mmse = _best(fig3_rows, DE_SCHEME)
    ok = mmse[10][0] == 7 and mmse[120][0] == 1
    table = ", ".join(f"K={k}: beta={b} ({v:.1f})" for k, (b, v) in sorted(mmse.items()))
    record_acceptance("5", ok, f"M-MMSE best beta at M=200: {table}; required K=10 -> 7, K=120 -> 1")
    assert ok


# 6 --------------------------------------------------------------------------------


def test_criterion_6_rmt_oracles():
    M, B, n = 64, 16, 2000
    rng = np.random.default_rng(SEED)
    R = []
    for _ in range(B):
        X = complex_normal(rng, (M, M // 4))
        C = X @ X.conj().T + 0.05 * np.eye(M)
        R.append(C / (np.trace(C).real / M))
    R = np.array(R)
    roots = np.linalg.cholesky(R)
    rho = 0.2
    Theta = np.diag(rng.uniform(0.1, 3.0, M))
    first_mc, second_mc = 0.0, 0.0
    for _ in range(n):
        H = np.einsum("bij,bj->ib", roots, complex_normal(rng, (B, M))) / np.sqrt(M)
        Q = np.linalg.inv(H @ H.conj().T + rho * np.eye(M))
        first_mc += np.trace(Q).real / M / n
        second_mc += np.trace(Q @ Theta @ Q).real / M / n
    first = resolvent_fixed_point(R, rho)
    second = second_order_equivalent(R, rho, Theta, first)
    gap_a = abs(np.trace(first.T).real / M - first_mc) / first_mc
    gap_b = abs(np.trace(second.T_prime).real / M - second_mc) / second_mc

    c = rng.uniform(0.05, 4.0, 24)
    m = 30
    Rc = c[:, None, None] * np.eye(m)
    mat, sca = resolvent_fixed_point(Rc, 0.4), scalar_fixed_point(c, 0.4, m)
    sec = second_order_equivalent(Rc, 0.4, np.eye(m), mat)
    dp, tp = scalar_second_order(c, m, sca)
    net = build_hex_network()
    drop = make_drop(net, 4, np.random.default_rng([SEED, 9]))
    _, sc = standard_scenario(net, 4, 3, np.random.default_rng([SEED, 10]), drop=drop)
    sinr_s, sinr_m = large_scale_sinr(sc, 40).sinr, large_scale_sinr(sc, 40, method="matrix").sinr
    gap_c = max(
        np.max(np.abs(sca.delta / mat.delta - 1)),
        np.max(np.abs(dp / sec.delta_prime - 1)),
        abs(tp / sec.T_prime[0, 0].real - 1),
        np.max(np.abs(sinr_s / sinr_m - 1)),
    )
    golden = scalar_fixed_point(np.array([1.0]), 1.0, 1, FixedPointConfig(rel_tol=1e-13))
    gap_d = abs(golden.delta[0] - (np.sqrt(5) - 1) / 2)
    ok = gap_a < 0.02 and gap_b < 0.03 and gap_c < 1e-9 and gap_d < 1e-10
    record_acceptance(
        "6", ok,
        f"(a) first-order gap {gap_a:.3%} (< 2%), (b) second-order gap {gap_b:.3%} (< 3%), "
        f"(c) scalar vs matrix {gap_c:.1e} (< 1e-9), (d) golden ratio error {gap_d:.1e} (< 1e-10)",
    )  # fmt: skip
    assert ok


# 7 and 8 ---------------------------------------------------------------------------


def test_criterion_7_estimation_suite():
    checks = check_estimation_moments(np.random.default_rng([SEED, 7]), n=2500, M=4)
    net = build_hex_network()
    drop = make_drop(net, 10, np.random.default_rng([SEED, 70]))
    _, sc = standard_scenario(net, 10, 4, np.random.default_rng([SEED, 71]), drop=drop)
    sum_rule = float(np.max(np.abs(sc.est_var + sc.err_var - sc.gains) / sc.gains))
    ok = all(c.passed for c in checks) and sum_rule <= 2 * np.finfo(float).eps
    detail = "; ".join(f"{c.name} {c.measured:.2e}" for c in checks)
    record_acceptance("7", ok, f"1e4 samples, 3-sigma: {detail}; sum-rule residual {sum_rule:.1e}")
    assert ok


def test_criterion_8_zf_nulling():
    net = build_hex_network()
    drop = make_drop(net, 10, np.random.default_rng([SEED, 80]))
    _, sc = standard_scenario(net, 10, 4, np.random.default_rng([SEED, 81]), drop=drop)
    check = check_zf_nulling(sc, 100, np.random.default_rng([SEED, 82]), n=50)
    record_acceptance("8", check.passed, f"max relative leakage over 50 realizations, 19 BSs: {check.measured:.1e} (<= 1e-9)")
    assert check.passed


# 9 --------------------------------------------------------------------------------


def test_criterion_9_determinism(tmp_path):
    base = {"M": [40], "K": [4], "beta": [1, 4], "schemes": ["m-mmse", "m-zf", "s-mmse", "mf"], "n_drops": 2,
            "n_realizations": 30, "master_seed": SEED, "label": "det"}  # fmt: skip
    a = run(ExperimentConfig.from_dict({**base, "output_path": str(tmp_path / "a"), "workers": 1}))
    b = run(ExperimentConfig.from_dict({**base, "output_path": str(tmp_path / "b"), "workers": 2}))
    same = a.csv_path.read_bytes() == b.csv_path.read_bytes()
    record_acceptance("9", same, f"two runs (1 and 2 workers), {len(a.rows)} rows: result CSVs byte-identical = {same}")
    assert same


# Fig. 4 (qualitative) -------------------------------------------------------------


def test_refined_reuse_qualitative():
    fractions = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
    cfg = ExperimentConfig.from_dict({"M": [200], "K": [10, 90], "beta": BETAS, "beta_f": fractions, "n_drops": 10,
                                      "skip_infeasible": True, "master_seed": SEED})  # fmt: skip
    se = defaultdict(list)
    for point in cfg.sweep_points():
        if point.B >= cfg.S:
            continue
        vals = []
        for d in range(cfg.n_drops):
            sc = unit_scenario(cfg, point, d)
            vals.append(large_scale_sinr(sc, point.M).se(sc.alloc.prelog(cfg.S)).sum(axis=1).mean())
        se[(point.K, point.beta_f)].append(np.mean(vals))
    best = {(K, f): max(v) for (K, f), v in se.items()}
    best_f = {K: max(fractions, key=lambda f: (best[(K, f)], -f)) for K in (10, 90)}
    ok = best_f[10] == 0.0 and best_f[90] > 0.0
    curve = {K: ", ".join(f"{f:g}: {best[(K, f)]:.1f}" for f in fractions) for K in (10, 90)}
    record_acceptance(
        "fig4 (qualitative)", ok,
        f"best beta_f K=10 -> {best_f[10]:g} [{curve[10]}]; K=90 -> {best_f[90]:g} [{curve[90]}]",
    )  # fmt: skip
    assert ok

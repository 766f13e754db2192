"""Built-in oracle suite behind the ``validate`` command.

Each check returns a :class:`Check` with the measured quantity and its
threshold; a failing check is report content, not an exception.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import draw_channels, observe_and_estimate, sample_directions
from .geometry import build_hex_network, make_drop
from .mc_eval import evaluate
from .precoding import Scheme, direction_coefficients, pilot_gram, pilot_projections
from .rmt import large_scale_sinr
from .scenario import standard_scenario

DEFAULT_SCENARIO = {"M": 100, "K": 10, "beta": 4, "n_realizations": 500, "master_seed": 2016}
SINR_GAP_LIMIT = 0.05
SUM_SE_GAP_LIMIT = 0.03


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    threshold: float
    passed: bool
    expect_fail: bool = False  # negative controls pass when the gap is large

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        rel = ">" if self.expect_fail else "<="
        return f"{verdict}  {self.name:<42s} measured={self.measured:.3e}  required {rel} {self.threshold:.1e}"


def _at_most(name, measured, threshold) -> Check:
    return Check(name, float(measured), threshold, bool(measured <= threshold))


def mc_de_gaps(sc, M: int, mc, gamma=None) -> tuple[float, float]:
    """Median per-user relative SINR gap and relative sum-SE gap between an M-MMSE
    Monte Carlo report ``mc`` and the large-scale approximation."""
    de = large_scale_sinr(sc, M, gamma=gamma)
    gap = np.median(np.abs(de.sinr - mc.sinr) / mc.sinr)
    de_sum = de.se(mc.prelog).sum(axis=1).mean()
    return float(gap), float(abs(de_sum - mc.mean_sum_se) / mc.mean_sum_se)


def check_dual_path(sc, M: int) -> Check:
    scalar = large_scale_sinr(sc, M, method="scalar").sinr
    matrix = large_scale_sinr(sc, M, method="matrix").sinr
    return _at_most("large-scale SINR scalar vs matrix path", np.max(np.abs(scalar / matrix - 1)), 1e-9)


def check_estimation_moments(rng, n: int = 2500, M: int = 4) -> list[Check]:
    """Estimate power and error orthogonality on a small network, 3-sigma bands."""
    net = build_hex_network()
    drop, sc = standard_scenario(net, 2, 1, rng)
    h = draw_channels(drop, M, rng, n)
    est = observe_and_estimate(h, drop, sc.alloc, sc.powers, rng)
    hat = est.user_estimates()
    err = h - hat
    samples = n * M
    j, l, k = 0, 0, 0
    x, e = hat[:, j, l, k].ravel(), err[:, j, l, k].ravel()
    v_est, v_err = sc.est_var[j, l, k], sc.err_var[j, l, k]
    z_power = abs(np.mean(np.abs(x) ** 2) - v_est) / (v_est / np.sqrt(samples))
    z_err = abs(np.mean(np.abs(e) ** 2) - v_err) / (v_err / np.sqrt(samples))
    z_orth = abs(np.mean(x * e.conj())) / (np.sqrt(v_est * v_err / samples))
    # users on one pilot share a direction at every BS
    shared = [(l2, k2) for l2, k2 in sc.alloc.pilot_classes()[sc.index[0, 0]]]
    (la, ka), (lb, kb) = shared[0], shared[1]
    a, b = hat[:, 0, la, ka], hat[:, 0, lb, kb]
    ratio = a / b
    collinear = np.max(np.abs(ratio - ratio[..., :1])) / np.max(np.abs(ratio))
    return [
        _at_most("estimate variance (z-score)", z_power, 3.0),
        _at_most("error variance (z-score)", z_err, 3.0),
        _at_most("estimate/error orthogonality (z-score)", z_orth, 3.0),
        _at_most("same-pilot estimate collinearity", collinear, 1e-12),
    ]


def check_zf_nulling(sc, M: int, rng, n: int = 8) -> Check:
    h_dir = sample_directions(sc.alpha, sc.B, M, rng, n)
    A = pilot_gram(h_dir)
    X = direction_coefficients(A, sc, Scheme.M_ZF)
    P, norms = pilot_projections(A, X)  # P[n, l, b, m] = h_lb^H g_lm
    own = np.zeros(P.shape[1:], dtype=bool)
    ll, mm = np.meshgrid(np.arange(sc.L), np.arange(sc.K), indexing="ij")
    own[ll, sc.index, mm] = True
    scale = np.sqrt(np.abs(A[..., np.arange(sc.B), np.arange(sc.B)])[..., :, None] * norms[..., None, :])
    leak = np.abs(P) / scale
    return _at_most("M-ZF nulling of other pilot directions", leak[:, ~own].max(), 1e-9)


def run_suite(scenario: dict | None = None) -> list[Check]:
    params = {**DEFAULT_SCENARIO, **(scenario or {})}
    M, K, beta = params["M"], params["K"], params["beta"]
    seed = params["master_seed"]
    net = build_hex_network()
    drop = make_drop(net, K, np.random.default_rng([seed, 0]))
    _, sc = standard_scenario(net, K, beta, np.random.default_rng([seed, 1]), drop=drop)
    checks = [check_dual_path(sc, M)]
    checks += check_estimation_moments(np.random.default_rng([seed, 2]))
    if M > sc.B:
        checks.append(check_zf_nulling(sc, M, np.random.default_rng([seed, 3])))
    mc = evaluate(sc, M, [Scheme.M_MMSE], params["n_realizations"], np.random.default_rng([seed, 4]), 500)
    gap, sum_gap = mc_de_gaps(sc, M, mc[Scheme.M_MMSE])
    checks.append(_at_most("MC vs large-scale median SINR gap", gap, SINR_GAP_LIMIT))
    checks.append(_at_most("MC vs large-scale sum-SE gap", sum_gap, SUM_SE_GAP_LIMIT))
    # negative control: weights without the squared gain must be caught
    tampered = tampered_gamma(sc)
    gap_bad, _ = mc_de_gaps(sc, M, mc[Scheme.M_MMSE], gamma=tampered)
    checks.append(Check("negative control: tampered pilot weights", gap_bad, SINR_GAP_LIMIT, gap_bad > SINR_GAP_LIMIT, True))
    return checks


def tampered_gamma(sc) -> np.ndarray:
    """Pilot weights built from ``d`` instead of ``d^2``: a deliberately wrong definition."""
    L = sc.L
    weight = (sc.powers.tau * sc.powers.p)[None] * sc.gains
    gamma = np.zeros_like(sc.gamma)
    for l in range(L):
        np.add.at(gamma[l], sc.index.ravel(), weight[l].ravel())
    return gamma

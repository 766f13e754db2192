"""Monte Carlo evaluation of the downlink SINR and ergodic SE.

The accumulator stores sums of raw inner products ``h_ljk^H g_lm`` between
every channel and every unnormalized direction, together with ``||g_lm||^2``.
Because the normalization ``lambda_lm`` is the mean of ``||g_lm||^2`` over the
same realizations, dividing at :func:`finalize` gives exactly the numbers a
second pass with stored ``lambda`` would.

Two samplers feed the accumulator:

``full``
    draws every channel ``h_jlk``, forms pilot observations and estimates,
    then correlates true channels with the precoders.
``conditional``
    draws the estimated pilot directions from their exact law and integrates
    the estimation error out analytically.  The error ``h - h_hat`` is
    independent of all estimates at that BS, so
    ``E|h^H g|^2 = c^2 |h_b^H g|^2 + err_var ||g||^2`` exactly, with
    ``c = sqrt(p) d``.  This needs only the B x B pilot Gram matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import complex_normal, observe_pilots, sample_directions
from .precoding import (
    InfeasibleError,
    Scheme,
    direction_coefficients,
    directions_from_coefficients,
    pilot_gram,
    pilot_projections,
)
from .scenario import ScenarioState

DEFAULT_BATCH = 16


@dataclass
class SinrAccumulator:
    """Running sums indexed ``[l, j, k, m]``: BS ``l`` precoder ``m`` seen by user ``(j, k)``."""

    n: int
    cross: np.ndarray  # complex sums of h_ljk^H g_lm
    cross_sq: np.ndarray  # sums of |h_ljk^H g_lm|^2
    norm_sq: np.ndarray  # (L, K) sums of ||g_lm||^2

    @classmethod
    def empty(cls, L: int, K: int) -> "SinrAccumulator":
        return cls(
            n=0,
            cross=np.zeros((L, L, K, K), dtype=complex),
            cross_sq=np.zeros((L, L, K, K)),
            norm_sq=np.zeros((L, K)),
        )

    def merge(self, other: "SinrAccumulator") -> "SinrAccumulator":
        return SinrAccumulator(
            n=self.n + other.n,
            cross=self.cross + other.cross,
            cross_sq=self.cross_sq + other.cross_sq,
            norm_sq=self.norm_sq + other.norm_sq,
        )


def accumulate(h: np.ndarray, g: np.ndarray, acc: SinrAccumulator) -> SinrAccumulator:
    """Add realizations of channels ``h`` (n, L, L, K, M) and directions ``g`` (n, L, K, M)."""
    if h.ndim != 5 or g.ndim != 4 or h.shape[0] != g.shape[0] or h.shape[-1] != g.shape[-1]:
        raise ValueError(f"dimension mismatch: h {h.shape}, g {g.shape}")
    z = np.einsum("nljkx,nlmx->nljkm", h.conj(), g)
    acc.n += h.shape[0]
    acc.cross += z.sum(axis=0)
    acc.cross_sq += (np.abs(z) ** 2).sum(axis=0)
    acc.norm_sq += (np.abs(g) ** 2).sum(axis=(0, -1))
    return acc


def accumulate_pilot_domain(
    P: np.ndarray, norms: np.ndarray, sc: ScenarioState, acc: SinrAccumulator
) -> SinrAccumulator:
    """Add realizations given ``P[n, l, b, m] = h_lb^H g_lm`` and ``||g_lm||^2``."""
    s1 = P.sum(axis=0)
    s2 = (np.abs(P) ** 2).sum(axis=0)
    nsum = norms.sum(axis=0)
    rows = sc.index  # pilot of each user (j, k)
    picked1 = s1[:, rows, :]  # (l, j, k, m)
    picked2 = s2[:, rows, :]
    acc.n += P.shape[0]
    acc.cross += sc.scale[..., None] * picked1
    acc.cross_sq += sc.scale[..., None] ** 2 * picked2 + sc.err_var[..., None] * nsum[:, None, None, :]
    acc.norm_sq += nsum
    return acc


@dataclass(frozen=True)
class SEReport:
    sinr: np.ndarray  # (L, K)
    se: np.ndarray  # (L, K) bit/s/Hz
    sum_se: np.ndarray  # (L,)
    prelog: float
    genie_sinr: np.ndarray = field(repr=False)  # same-sample SINR with full signal power credited

    @property
    def mean_sum_se(self) -> float:
        return float(self.sum_se.mean())


def spectral_efficiency(sinr: np.ndarray, prelog: float) -> np.ndarray:
    if not 0.0 <= prelog <= 1.0:
        raise ValueError(f"prelog must lie in [0, 1], got {prelog}")
    return prelog * np.log2(1.0 + sinr)


def finalize(acc: SinrAccumulator, rho_dl: np.ndarray, sigma2: float, prelog: float) -> SEReport:
    if acc.n < 1:
        raise ValueError("no realizations accumulated")
    L, _, K, _ = acc.cross.shape
    lam = acc.norm_sq / acc.n
    if np.any(lam <= 0):
        raise ValueError("zero-norm precoder in every realization")
    mean = acc.cross / acc.n / np.sqrt(lam)[:, None, None, :]
    mean_sq = acc.cross_sq / acc.n / lam[:, None, None, :]
    jj, kk = np.meshgrid(np.arange(L), np.arange(K), indexing="ij")
    signal = rho_dl * np.abs(mean[jj, jj, kk, kk]) ** 2
    total = np.einsum("lm,ljkm->jk", rho_dl, mean_sq)
    denom = total - signal + sigma2
    if np.any(denom <= 0):
        raise ArithmeticError("negative interference estimate; increase the number of realizations")
    sinr = signal / denom
    self_sq = rho_dl * mean_sq[jj, jj, kk, kk]
    genie = self_sq / (total - self_sq + sigma2)
    se = spectral_efficiency(sinr, prelog)
    return SEReport(sinr=sinr, se=se, sum_se=se.sum(axis=1), prelog=prelog, genie_sinr=genie)


def _check_feasible(sc: ScenarioState, scheme: Scheme, M: int) -> None:
    if scheme is Scheme.M_ZF and M <= sc.B:
        raise InfeasibleError(f"M-ZF needs M > B (got M={M}, B={sc.B})")


def simulate(
    sc: ScenarioState,
    M: int,
    schemes: list,
    n_realizations: int,
    rng: np.random.Generator,
    mode: str = "conditional",
    batch: int = DEFAULT_BATCH,
    s_mmse_regularizer: str = "multi",
) -> dict[Scheme, SinrAccumulator]:
    """Accumulate SINR statistics for several schemes over shared realizations."""
    schemes = [Scheme.parse(s) for s in schemes]
    if not schemes:
        raise ValueError("no schemes requested")
    for s in schemes:
        _check_feasible(sc, s, M)
    if mode not in ("conditional", "full"):
        raise ValueError(f"unknown Monte Carlo mode {mode!r}")
    accs = {s: SinrAccumulator.empty(sc.L, sc.K) for s in schemes}
    done = 0
    while done < n_realizations:
        n = min(batch, n_realizations - done)
        if mode == "conditional":
            h_dir = sample_directions(sc.alpha, sc.B, M, rng, n)
        else:
            h = draw_channels_from_gains(sc.gains, M, rng, n)
            y = observe_pilots(h, sc.alloc, sc.powers.p, sc.sigma2, rng)
            h_dir = sc.alpha[..., None] * y
        A = pilot_gram(h_dir)
        for s in schemes:
            X = direction_coefficients(A, sc, s, s_mmse_regularizer)
            if mode == "conditional":
                P, norms = pilot_projections(A, X)
                accumulate_pilot_domain(P, norms, sc, accs[s])
            else:
                accumulate(h, directions_from_coefficients(h_dir, X), accs[s])
        done += n
    return accs


def draw_channels_from_gains(gains: np.ndarray, M: int, rng: np.random.Generator, n: int) -> np.ndarray:
    return complex_normal(rng, (n,) + gains.shape + (M,), gains[..., None])


def evaluate(
    sc: ScenarioState,
    M: int,
    schemes: list,
    n_realizations: int,
    rng: np.random.Generator,
    S: int,
    mode: str = "conditional",
    batch: int = DEFAULT_BATCH,
    s_mmse_regularizer: str = "multi",
) -> dict[Scheme, SEReport]:
    accs = simulate(sc, M, schemes, n_realizations, rng, mode, batch, s_mmse_regularizer)
    prelog = sc.alloc.prelog(S)
    return {s: finalize(a, sc.powers.rho_dl, sc.sigma2, prelog) for s, a in accs.items()}


__all__ = [
    "SinrAccumulator",
    "SEReport",
    "accumulate",
    "accumulate_pilot_domain",
    "finalize",
    "simulate",
    "evaluate",
    "spectral_efficiency",
]

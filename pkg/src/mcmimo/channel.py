"""Small-scale fading and uplink MMSE channel estimation.

Estimation is simulated in the pilot-projected domain: the observation of
pilot ``b`` at BS ``j`` is ``y_jb = Y_j v_b^*``, which by pilot orthogonality is
``B * sum_{users on b} sqrt(p) h + n`` with ``n ~ CN(0, B sigma2 I)``.  The
M x B pilot matrix is never formed.

Array layout: ``h[..., j, l, k, :]`` is the channel from user ``k`` in cell
``l`` to BS ``j``; ``h_dir[..., j, b, :]`` is the estimated direction of
pilot ``b`` at BS ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import UserDrop
from .pilots import PilotAllocation
from .power import PowerProfile


def complex_normal(rng: np.random.Generator, shape: tuple[int, ...], var: float | np.ndarray = 1.0) -> np.ndarray:
    """CN(0, var) samples; real and imaginary parts each carry ``var / 2``."""
    z = rng.standard_normal(shape + (2,)).view(np.complex128)[..., 0]
    return z * np.sqrt(np.asarray(var) / 2.0)


def draw_channels(drop: UserDrop, M: int, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Rayleigh channels with per-link variance ``gains[j, l, k]``.

    Returns shape (L, L, K, M), or (n, L, L, K, M) when ``n`` is given.
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    lead = () if n is None else (n,)
    return complex_normal(rng, lead + drop.gains.shape + (M,), drop.gains[..., None])


def pilot_loads(gains: np.ndarray, index: np.ndarray, B: int, p: np.ndarray) -> np.ndarray:
    """``sum_{users on pilot b} p d_j(z)`` for each (BS j, pilot b), shape (L, B)."""
    L = gains.shape[0]
    load = np.zeros((L, B))
    weighted = gains * p[None, :, :]
    for j in range(L):
        np.add.at(load[j], index.ravel(), weighted[j].ravel())
    return load


def estimation_coefficients(gains: np.ndarray, alloc: PilotAllocation, p: np.ndarray, sigma2: float) -> np.ndarray:
    """Per-pilot MMSE scaling ``alpha[j, b] = 1 / (B * load[j, b] + sigma2)``."""
    return 1.0 / (alloc.B * pilot_loads(gains, alloc.index, alloc.B, p) + sigma2)


def estimate_scale(gains: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Amplitude ``sqrt(p_lk) d_j(z_lk)`` mapping a pilot direction to a user estimate."""
    return np.sqrt(p)[None, :, :] * gains


def estimate_variances(gains: np.ndarray, alloc: PilotAllocation, p: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Per-entry variance of the estimate: ``p d^2 alpha B``, shape (L, L, K)."""
    L = gains.shape[0]
    a = alpha[np.arange(L)[:, None, None], alloc.index[None, :, :]]
    return p[None] * gains**2 * a * alloc.B


def error_variances(gains: np.ndarray, alloc: PilotAllocation, p: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Per-entry variance of the estimation error, shape (L, L, K)."""
    return gains - estimate_variances(gains, alloc, p, alpha)


def error_variance(
    drop: UserDrop, alloc: PilotAllocation, powers: PowerProfile, alpha: np.ndarray, j: int, l: int, k: int
) -> float:
    d = drop.gains[j, l, k]
    value = d * (1.0 - powers.p[l, k] * d * alpha[j, alloc.index[l, k]] * alloc.B)
    if value < -1e-12 * d:
        raise ValueError(f"negative error variance {value} for link ({j}, {l}, {k}): inconsistent alpha")
    return max(value, 0.0)


@dataclass(frozen=True)
class EstimateSet:
    h_dir: np.ndarray  # (..., L, B, M)
    alpha: np.ndarray  # (L, B)
    index: np.ndarray  # (L, K)
    scale: np.ndarray  # (L, L, K)
    est_var: np.ndarray  # (L, L, K)
    err_var: np.ndarray  # (L, L, K)

    def user_estimate(self, j: int, l: int, k: int) -> np.ndarray:
        return self.scale[j, l, k] * self.h_dir[..., j, self.index[l, k], :]

    def user_estimates(self) -> np.ndarray:
        """All estimates, shape (..., L, L, K, M)."""
        L = self.alpha.shape[0]
        picked = self.h_dir[..., np.arange(L)[:, None, None], self.index[None, :, :], :]
        return self.scale[..., None] * picked


def observe_pilots(
    h: np.ndarray, alloc: PilotAllocation, p: np.ndarray, sigma2: float, rng: np.random.Generator
) -> np.ndarray:
    """Pilot-projected observations ``y[..., j, b, :]``."""
    *lead, L, _, K, M = h.shape
    B = alloc.B
    onehot = np.zeros((L * K, B))
    onehot[np.arange(L * K), alloc.index.ravel()] = 1.0
    weighted = (np.sqrt(p)[..., None] * h).reshape(*lead, L, L * K, M)
    y = B * np.einsum("...jum,ub->...jbm", weighted, onehot)
    return y + complex_normal(rng, y.shape, B * sigma2)


def observe_and_estimate(
    h: np.ndarray, drop: UserDrop, alloc: PilotAllocation, powers: PowerProfile, rng: np.random.Generator
) -> EstimateSet:
    if h.shape[-4:-1] != drop.gains.shape:
        raise ValueError(f"channel shape {h.shape} does not match gains {drop.gains.shape}")
    alpha = estimation_coefficients(drop.gains, alloc, powers.p, powers.sigma2)
    y = observe_pilots(h, alloc, powers.p, powers.sigma2, rng)
    est_var = estimate_variances(drop.gains, alloc, powers.p, alpha)
    return EstimateSet(
        h_dir=alpha[..., None] * y,
        alpha=alpha,
        index=alloc.index,
        scale=estimate_scale(drop.gains, powers.p),
        est_var=est_var,
        err_var=drop.gains - est_var,
    )


def sample_directions(alpha: np.ndarray, B: int, M: int, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` realizations of the estimated directions directly.

    Each ``h_dir[j, b]`` is CN(0, alpha[j, b] B I_M) and independent across
    (j, b), which is the exact law of ``alpha * y`` above.
    """
    return complex_normal(rng, (n,) + alpha.shape + (M,), (alpha * B)[..., None])

"""Deterministic equivalents of resolvent functionals and the large-scale SINR.

For ``H`` (M x B) with independent columns ``h_b ~ CN(0, R_b / M)`` and
``rho > 0``, the normalized trace ``tr(D (H H^H + rho I)^-1) / M`` is
approximated by ``tr(D T) / M`` where

    T = ( (1/M) sum_b R_b / (1 + delta_b) + rho I )^-1,
    delta_b = tr(R_b T) / M,

solved by fixed-point iteration from ``delta_b = 1 / rho``.  The second-order
functional ``tr(D Q Theta Q) / M`` with ``Q = (H H^H + rho I)^-1`` is
approximated by ``tr(D T') / M`` with

    T' = T Theta T + T ((1/M) sum_b R_b delta'_b / (1 + delta_b)^2) T,
    delta' = (I - J)^-1 v,
    J[b, l] = tr(R_b T R_l T) / M / (M (1 + delta_l)^2),
    v[b] = tr(R_b T Theta T) / M.

Under the i.i.d. channel model every covariance is a scaled identity
``R_b = c_b I``; the scalar routines exploit that and agree with the matrix
routines to rounding.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .scenario import ScenarioState


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class FixedPointConfig:
    rel_tol: float = 1e-10
    max_iter: int = 10000

    def __post_init__(self) -> None:
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class ResolventEquivalent:
    delta: np.ndarray  # (B,)
    T: np.ndarray  # (M, M)
    iterations: int


@dataclass(frozen=True)
class SecondOrderEquivalent:
    delta_prime: np.ndarray  # (B,)
    T_prime: np.ndarray  # (M, M)
    J: np.ndarray  # (B, B)
    v: np.ndarray  # (B,)


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    scale = np.maximum(np.abs(new), np.finfo(float).tiny)
    return float(np.max(np.abs(new - old) / scale))


class _ResidualMonitor:
    """Warn once if the fixed-point residual grows after the first few steps."""

    def __init__(self, grace: int = 5) -> None:
        self.grace = grace
        self.last = np.inf
        self.step = 0
        self.warned = False

    def __call__(self, residual: float) -> None:
        self.step += 1
        if self.step > self.grace and residual > self.last * (1 + 1e-6) and residual > 1e-13 and not self.warned:
            warnings.warn(f"fixed-point residual increased at iteration {self.step}", RuntimeWarning)
            self.warned = True
        self.last = residual


def resolvent_fixed_point(
    R: np.ndarray, rho: float, cfg: FixedPointConfig = FixedPointConfig()
) -> ResolventEquivalent:
    """General-matrix fixed point for ``B`` Hermitian covariances ``R`` (B, M, M)."""
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    R = np.asarray(R)
    B, M, _ = R.shape
    eye = np.eye(M)
    delta = np.full(B, 1.0 / rho)
    monitor = _ResidualMonitor()
    residual = np.inf
    for it in range(1, cfg.max_iter + 1):
        T = np.linalg.inv(np.einsum("b,bij->ij", 1.0 / (1.0 + delta), R) / M + rho * eye)
        new = np.einsum("bij,ji->b", R, T).real / M
        residual = _relative_change(new, delta)
        monitor(residual)
        delta = new
        if residual < cfg.rel_tol:
            T = np.linalg.inv(np.einsum("b,bij->ij", 1.0 / (1.0 + delta), R) / M + rho * eye)
            return ResolventEquivalent(delta=delta, T=0.5 * (T + T.conj().T), iterations=it)
    raise ConvergenceError(f"no convergence after {cfg.max_iter} iterations (residual {residual:.3e})")


def second_order_equivalent(
    R: np.ndarray, rho: float, Theta: np.ndarray, first: ResolventEquivalent
) -> SecondOrderEquivalent:
    """General-matrix equivalent of ``Q Theta Q`` given the first-order solution."""
    R = np.asarray(R)
    B, M, _ = R.shape
    T, delta = first.T, first.delta
    RT = R @ T  # (B, M, M)
    # tr(R_b T R_l T) = sum_ij (R_b T)_ij (R_l T)_ji
    traces = np.einsum("bij,lji->bl", RT, RT).real / M
    J = traces / (M * (1.0 + delta)[None, :] ** 2)
    TThetaT = T @ Theta @ T
    v = np.einsum("bij,ji->b", R, TThetaT).real / M
    I_J = np.eye(B) - J
    if np.linalg.cond(I_J) > 1e12:
        raise ArithmeticError("I - J is numerically singular")
    delta_prime = np.linalg.solve(I_J, v)
    inner = np.einsum("b,bij->ij", delta_prime / (1.0 + delta) ** 2, R) / M
    T_prime = TThetaT + T @ inner @ T
    return SecondOrderEquivalent(delta_prime=delta_prime, T_prime=0.5 * (T_prime + T_prime.conj().T), J=J, v=v)


@dataclass(frozen=True)
class ScalarEquivalent:
    delta: np.ndarray  # (B,)
    t: float  # T = t I
    iterations: int


def scalar_fixed_point(
    c: np.ndarray, rho: float, M: int, cfg: FixedPointConfig = FixedPointConfig()
) -> ScalarEquivalent:
    """Fixed point when ``R_b = c_b I``: ``t = 1 / (sum_b c_b / (1 + c_b t) / M + rho)``."""
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    c = np.asarray(c, dtype=float)
    if np.any(c < 0):
        raise ValueError("covariance scales must be nonnegative")
    delta = np.full(c.shape, 1.0 / rho)
    monitor = _ResidualMonitor()
    residual = np.inf
    for it in range(1, cfg.max_iter + 1):
        t = 1.0 / ((c / (1.0 + delta)).sum() / M + rho)
        new = c * t
        residual = _relative_change(new, delta) if np.any(c > 0) else 0.0
        monitor(residual)
        delta = new
        if residual < cfg.rel_tol:
            t = 1.0 / ((c / (1.0 + delta)).sum() / M + rho)
            return ScalarEquivalent(delta=delta, t=float(t), iterations=it)
    raise ConvergenceError(f"no convergence after {cfg.max_iter} iterations (residual {residual:.3e})")


def scalar_second_order(c: np.ndarray, M: int, first: ScalarEquivalent, theta: float = 1.0) -> tuple[np.ndarray, float]:
    """``(delta', t')`` with ``T' = t' I`` for ``Theta = theta I``.

    ``J`` is rank one, ``J = u w^T`` with ``u_b = c_b t`` and
    ``w_l = c_l t / (M (1 + delta_l)^2)``, so Sherman-Morrison gives
    ``delta'`` in O(B).
    """
    c = np.asarray(c, dtype=float)
    t, delta = first.t, first.delta
    u = c * t
    w = c * t / (M * (1.0 + delta) ** 2)
    v = c * t * t * theta
    denom = 1.0 - w @ u
    if denom <= 0:
        raise ArithmeticError("I - J is singular or indefinite")
    delta_prime = v + u * (w @ v) / denom
    t_prime = t * t * (theta + (c * delta_prime / (1.0 + delta) ** 2).sum() / M)
    return delta_prime, float(t_prime)


@dataclass(frozen=True)
class DeterministicEquivalent:
    """Large-scale SINR of the M-MMSE precoder and its ingredients.

    Per BS ``l``: ``rho_reg[l]``, resolvent scale ``t[l]`` (``T_l = t I``) and
    second-order scale ``t2[l]`` for ``Theta = I``.  Per user ``(j, k)``:
    ``delta_user`` (serving-BS trace with the user's pilot covariance),
    ``theta2`` (its ``Theta = I`` counterpart) and ``sinr``.  ``mu`` is
    indexed ``[l, j, k, m]`` like the Monte Carlo accumulators.
    """

    rho_reg: np.ndarray  # (L,)
    delta: np.ndarray  # (L, B) first-order fixed points per BS
    t: np.ndarray  # (L,)
    t2: np.ndarray  # (L,)
    t_prime: np.ndarray  # (L, K): tr(T'_lm)/M for Theta = pilot covariance of (l, m)
    delta_user: np.ndarray  # (L, K)
    theta2: np.ndarray  # (L, K)
    vartheta: np.ndarray  # (L, L, K): [l, j, k]
    mu: np.ndarray  # (L, L, K, K): [l, j, k, m]
    coherent: np.ndarray  # (L, K) same-pilot interference term
    noncoherent: np.ndarray  # (L, K)
    signal: np.ndarray  # (L, K)
    noise: float
    sinr: np.ndarray  # (L, K)

    def se(self, prelog: float) -> np.ndarray:
        return prelog * np.log2(1.0 + self.sinr)


def _per_bs_scalar(sc: ScenarioState, M: int, cfg: FixedPointConfig, gamma: np.ndarray):
    L, B = sc.L, sc.B
    cov = sc.alpha * B  # pilot-direction variance, Phi_V[l, b] = cov[l, b] I
    rho_reg = (sc.sigma2 + sc.phi) / M
    t = np.empty(L)
    t2 = np.empty(L)
    delta = np.empty((L, B))
    for l in range(L):
        c = gamma[l] * cov[l]
        first = scalar_fixed_point(c, rho_reg[l], M, cfg)
        _, t2[l] = scalar_second_order(c, M, first, 1.0)
        t[l] = first.t
        delta[l] = first.delta
    # second-order scale for Theta = cov * I is linear in Theta
    t_prime = cov[np.arange(L)[:, None], sc.index] * t2[:, None]
    return rho_reg, delta, t, t2, t_prime


def _per_bs_matrix(sc: ScenarioState, M: int, cfg: FixedPointConfig, gamma: np.ndarray):
    """Same quantities through the general matrix routines (O(B M^3); for checks)."""
    L, B = sc.L, sc.B
    cov = sc.alpha * B
    rho_reg = (sc.sigma2 + sc.phi) / M
    eye = np.eye(M)
    t = np.empty(L)
    t2 = np.empty(L)
    delta = np.empty((L, B))
    t_prime = np.empty((L, sc.K))
    for l in range(L):
        R = (gamma[l] * cov[l])[:, None, None] * eye
        first = resolvent_fixed_point(R, rho_reg[l], cfg)
        delta[l] = first.delta
        t[l] = np.trace(first.T).real / M
        t2[l] = np.trace(second_order_equivalent(R, rho_reg[l], eye, first).T_prime).real / M
        cache: dict[int, float] = {}
        for m, b in enumerate(sc.index[l].tolist()):
            if b not in cache:
                Tp = second_order_equivalent(R, rho_reg[l], cov[l, b] * eye, first).T_prime
                cache[b] = np.trace(Tp).real / M
            t_prime[l, m] = cache[b]
    return rho_reg, delta, t, t2, t_prime


def large_scale_sinr(
    sc: ScenarioState,
    M: int,
    cfg: FixedPointConfig = FixedPointConfig(),
    method: str = "scalar",
    gamma: np.ndarray | None = None,
) -> DeterministicEquivalent:
    """Large-scale approximation of every user's M-MMSE downlink SINR.

    ``gamma`` overrides the combiner pilot weights (a hook for negative
    controls); the precoder itself is unaffected.
    """
    L, K, B = sc.L, sc.K, sc.B
    gamma = sc.gamma if gamma is None else gamma
    if method == "scalar":
        rho_reg, delta, t, t2, t_prime = _per_bs_scalar(sc, M, cfg, gamma)
    elif method == "matrix":
        rho_reg, delta, t, t2, t_prime = _per_bs_matrix(sc, M, cfg, gamma)
    else:
        raise ValueError(f"unknown method {method!r}")

    cov = sc.alpha * B
    idx = sc.index
    bs = np.arange(L)
    p, rho_dl, d = sc.powers.p, sc.powers.rho_dl, sc.gains

    own_cov = cov[bs[:, None], idx]  # (L, K): cov of (l, m)'s pilot at its own BS l
    delta_user = own_cov * t[:, None]
    theta2 = own_cov * t2[:, None]
    if np.any(theta2 <= 0):
        raise ArithmeticError("nonpositive second-order trace")

    # [l, j, k]: quantities at BS l for the pilot of user (j, k)
    cov_lb = cov[:, idx]  # (L, L, K)
    gamma_lb = gamma[:, idx]
    vartheta = cov_lb * t[:, None, None]
    vartheta_p = cov_lb[..., None] * t_prime[:, None, None, :]  # [l, j, k, m]
    gv = gamma_lb * vartheta
    correction = p[None] * d * gamma_lb * vartheta * (2.0 + gv) / (1.0 + gv) ** 2
    mu = t_prime[:, None, None, :] - correction[..., None] * vartheta_p

    ratio = rho_dl * delta_user**2 / theta2  # (l, m) -> rho_lm delta_lm^2 / theta''_lm
    same = idx[None, None, :, :] == idx[:, :, None, None]  # [j, k, l, m]
    # coherent: p_jk sum_{(l,m) != (j,k), same pilot} rho_lm d_l(z_jk)^2 delta_lm^2 / theta''_lm
    coh_all = np.einsum("jklm,ljk,lm->jk", same, d**2, ratio)
    signal_core = d[bs, bs, :] ** 2 * ratio  # the (l, m) = (j, k) term
    coherent = p * (coh_all - signal_core)
    # noncoherent: sum_{i_lm != i_jk} rho_lm d_l(z_jk) mu_ljkm / (M theta''_lm)
    weight = rho_dl / (M * theta2)  # [l, m]
    terms = mu * d[..., None] * weight[:, None, None, :]  # [l, j, k, m]
    noncoherent = np.einsum("jklm,ljkm->jk", ~same, terms)
    signal = p * signal_core
    noise = sc.sigma2 / M
    sinr = signal / (coherent + noncoherent + noise)
    if np.any(sinr <= 0):
        raise ArithmeticError("nonpositive large-scale SINR")
    return DeterministicEquivalent(
        rho_reg=rho_reg,
        delta=delta,
        t=t,
        t2=t2,
        t_prime=t_prime,
        delta_user=delta_user,
        theta2=theta2,
        vartheta=vartheta,
        mu=mu,
        coherent=coherent,
        noncoherent=noncoherent,
        signal=signal,
        noise=noise,
        sinr=sinr,
    )

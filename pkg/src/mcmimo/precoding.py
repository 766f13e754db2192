"""Downlink precoders: M-MMSE, S-MMSE, M-ZF and MF.

Two routes compute the same directions.  The per-user functions work in the
M-dimensional antenna domain and factor the regularized Gram matrix.  The
batched engine used for Monte Carlo stays in the B-dimensional pilot domain:
with ``A = H^H H`` (columns of ``H`` are the pilot directions) the push-through
identity gives

    (H G H^H + s I)^-1 H = H (G A + s I)^-1,

so every direction is ``g = H x`` and the quantities Monte Carlo needs,
``H^H g = A x`` and ``||g||^2 = x^H A x``, never touch antenna space again.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channel import EstimateSet
from .scenario import ScenarioState


class Scheme(str, Enum):
    MF = "mf"
    S_MMSE = "s-mmse"
    M_ZF = "m-zf"
    M_MMSE = "m-mmse"

    @classmethod
    def parse(cls, name: "str | Scheme") -> "Scheme":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown scheme {name!r}; expected one of {[s.value for s in cls]}") from None


class InfeasibleError(ValueError):
    """The requested precoder cannot be built for this configuration."""


@dataclass(frozen=True)
class CombinerWeights:
    gamma: np.ndarray  # (L, B)
    phi: np.ndarray  # (L,)


@dataclass(frozen=True)
class PrecoderSet:
    w: np.ndarray  # (n, ..., M) normalized precoders per realization
    lambda_norm: np.ndarray  # (...,)
    scheme: Scheme


def combiner_weights(sc: ScenarioState) -> CombinerWeights:
    return CombinerWeights(gamma=sc.gamma, phi=sc.phi)


def _pilot_gram(h_dir_j: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``sum_b w_b h_b h_b^H`` for rows ``h_dir_j[b]``."""
    return (h_dir_j.T * weights) @ h_dir_j.conj()


def _regularized_solve(gram: np.ndarray, reg: float, rhs: np.ndarray) -> np.ndarray:
    M = gram.shape[0]
    factor = cho_factor(gram + reg * np.eye(M), lower=True)
    return cho_solve(factor, rhs)


def m_mmse_direction(
    est: EstimateSet, weights: CombinerWeights, j: int, k: int, sigma2: float
) -> np.ndarray:
    """Multi-cell MMSE direction using all B estimated directions at BS ``j``."""
    gram = _pilot_gram(est.h_dir[j], weights.gamma[j])
    return _regularized_solve(gram, sigma2 + weights.phi[j], est.user_estimate(j, j, k))


def intra_cell_regularizer(sc: ScenarioState, j: int) -> float:
    """``sigma2`` plus the estimation-error power of the serving cell's own users only."""
    return sc.sigma2 + float((sc.powers.tau[j] * sc.err_var[j, j]).sum())


def s_mmse_gamma(sc: ScenarioState) -> np.ndarray:
    """Pilot weights restricted to each BS's own users, shape (L, B)."""
    L = sc.L
    gamma = np.zeros((L, sc.B))
    own = sc.powers.tau * sc.powers.p * sc.gains[np.arange(L), np.arange(L)] ** 2
    for l in range(L):
        gamma[l, sc.index[l]] = own[l]
    return gamma


def s_mmse_direction(
    est: EstimateSet, sc: ScenarioState, j: int, k: int, regularizer: str = "multi"
) -> np.ndarray:
    """Single-cell MMSE direction built from the K intra-cell estimates."""
    own = np.stack([est.user_estimate(j, j, m) for m in range(sc.K)])
    gram = _pilot_gram(own, sc.powers.tau[j])
    reg = sc.sigma2 + sc.phi[j] if regularizer == "multi" else intra_cell_regularizer(sc, j)
    return _regularized_solve(gram, reg, est.user_estimate(j, j, k))


def m_zf_direction(est: EstimateSet, j: int, k: int) -> np.ndarray:
    """Pseudo-inverse direction nulling every other estimated pilot direction."""
    H = est.h_dir[j].T  # (M, B)
    M, B = H.shape
    if M <= B:
        raise InfeasibleError(f"M-ZF needs M > B (got M={M}, B={B})")
    gram = H.conj().T @ H
    e = np.zeros(B)
    e[est.index[j, k]] = 1.0
    try:
        factor = cho_factor(gram, lower=True)
    except np.linalg.LinAlgError as exc:
        raise InfeasibleError("estimated direction matrix is rank deficient") from exc
    return H @ cho_solve(factor, e)


def mf_direction(est: EstimateSet, j: int, k: int) -> np.ndarray:
    return est.user_estimate(j, j, k)


def normalize(g: np.ndarray, rho_dl: np.ndarray | float | None = None, scheme: Scheme = Scheme.M_MMSE) -> PrecoderSet:
    """Scale directions so the average of ``||w||^2`` over realizations (axis 0) is one.

    ``rho_dl`` is not needed for the scaling; when given it is checked for
    positivity since ``sqrt(rho) w`` is what gets transmitted.
    """
    g = np.asarray(g)
    if g.shape[0] < 1:
        raise ValueError("need at least one realization")
    if rho_dl is not None and np.any(np.asarray(rho_dl) <= 0):
        raise ValueError("downlink powers must be positive")
    lam = np.mean(np.sum(np.abs(g) ** 2, axis=-1), axis=0)
    if np.any(lam <= 0):
        raise ValueError("zero direction in every realization: precoder cannot be normalized")
    return PrecoderSet(w=g / np.sqrt(lam)[..., None], lambda_norm=lam, scheme=scheme)


# --- batched pilot-domain engine -------------------------------------------------


def pilot_gram(h_dir: np.ndarray) -> np.ndarray:
    """``A[..., l, b, c] = h_b^H h_c`` for directions ``h_dir[..., l, b, :]``."""
    return h_dir.conj() @ np.swapaxes(h_dir, -1, -2)


def _own_selector(sc: ScenarioState, amplitude: bool) -> np.ndarray:
    """(L, B, K) matrix with ``c_lm`` (or 1) at row ``i_lm`` of column ``m``."""
    L, K = sc.L, sc.K
    E = np.zeros((L, sc.B, K))
    ll, mm = np.meshgrid(np.arange(L), np.arange(K), indexing="ij")
    E[ll, sc.index, mm] = sc.scale[ll, ll, mm] if amplitude else 1.0
    return E


def direction_coefficients(A: np.ndarray, sc: ScenarioState, scheme: Scheme, s_mmse_regularizer: str = "multi") -> np.ndarray:
    """Coefficients ``X[..., l, :, m]`` with ``g_lm = H_l X[..., l, :, m]``.

    ``A`` holds pilot Gram matrices of shape (..., L, B, B).
    """
    scheme = Scheme.parse(scheme)
    B = sc.B
    eye = np.eye(B)
    if scheme is Scheme.MF:
        return np.broadcast_to(_own_selector(sc, True), A.shape[:-2] + (B, sc.K)).copy()
    if scheme is Scheme.M_ZF:
        # callers check M > B; a singular Gram here means rank-deficient directions
        try:
            return np.linalg.solve(A, np.broadcast_to(_own_selector(sc, False), A.shape[:-2] + (B, sc.K)))
        except np.linalg.LinAlgError as exc:
            raise InfeasibleError("pilot Gram matrix is singular (M-ZF needs M > B)") from exc
    if scheme is Scheme.M_MMSE:
        gamma = sc.gamma
        reg = sc.sigma2 + sc.phi
    else:
        gamma = s_mmse_gamma(sc)
        if s_mmse_regularizer == "multi":
            reg = sc.sigma2 + sc.phi
        else:
            reg = np.array([intra_cell_regularizer(sc, l) for l in range(sc.L)])
    system = gamma[..., :, None] * A + reg[:, None, None] * eye
    return np.linalg.solve(system, np.broadcast_to(_own_selector(sc, True), A.shape[:-2] + (B, sc.K)))


def pilot_projections(A: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inner products ``h_b^H g_m = (A X)[b, m]`` and norms ``||g_m||^2``."""
    P = A @ X
    norms = np.einsum("...bm,...bm->...m", X.conj(), P).real
    return P, norms


def directions_from_coefficients(h_dir: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Antenna-domain directions ``g[..., l, m, :]``."""
    return np.swapaxes(np.swapaxes(h_dir, -1, -2) @ X, -1, -2)

"""Large-scale state shared by the Monte Carlo and deterministic-equivalent paths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import estimate_scale, estimate_variances, estimation_coefficients
from .geometry import NetworkGeometry, UserDrop, make_drop
from .pilots import PilotAllocation, allocate_refined, allocate_symmetric, reuse_coloring
from .power import PowerProfile, make_power_profile


@dataclass(frozen=True)
class ScenarioState:
    gains: np.ndarray  # (L, L, K)
    alloc: PilotAllocation
    powers: PowerProfile
    alpha: np.ndarray  # (L, B)
    est_var: np.ndarray  # (L, L, K)
    err_var: np.ndarray  # (L, L, K)
    scale: np.ndarray  # (L, L, K)
    gamma: np.ndarray  # (L, B)
    phi: np.ndarray  # (L,)

    @property
    def L(self) -> int:
        return self.gains.shape[0]

    @property
    def K(self) -> int:
        return self.gains.shape[2]

    @property
    def B(self) -> int:
        return self.alloc.B

    @property
    def sigma2(self) -> float:
        return self.powers.sigma2

    @property
    def index(self) -> np.ndarray:
        return self.alloc.index


def combiner_terms(
    gains: np.ndarray, alloc: PilotAllocation, powers: PowerProfile, err_var: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Pilot weights ``gamma[l, b]`` and residual error power ``phi[l]``.

    ``gamma[l, b] = sum_{users on b} tau p d_l(z)^2`` are the diagonal entries
    of the combiner weight matrix; ``phi[l] = sum_users tau * err_var``.
    """
    L = gains.shape[0]
    weight = (powers.tau * powers.p)[None] * gains**2
    gamma = np.zeros((L, alloc.B))
    for l in range(L):
        np.add.at(gamma[l], alloc.index.ravel(), weight[l].ravel())
    phi = (powers.tau[None] * err_var).sum(axis=(1, 2))
    return gamma, phi


def build_scenario(gains: np.ndarray, alloc: PilotAllocation, powers: PowerProfile) -> ScenarioState:
    alpha = estimation_coefficients(gains, alloc, powers.p, powers.sigma2)
    est_var = estimate_variances(gains, alloc, powers.p, alpha)
    err_var = gains - est_var
    gamma, phi = combiner_terms(gains, alloc, powers, err_var)
    return ScenarioState(
        gains=gains,
        alloc=alloc,
        powers=powers,
        alpha=alpha,
        est_var=est_var,
        err_var=err_var,
        scale=estimate_scale(gains, powers.p),
        gamma=gamma,
        phi=phi,
    )


def standard_scenario(
    net: NetworkGeometry,
    K: int,
    beta: int,
    rng: np.random.Generator,
    beta_f: float = 0.0,
    kappa: float = 3.7,
    shadow_var_db2: float = 5.0,
    rho_ul_db: float = 0.0,
    edge_snr_db: float = -3.0,
    sigma2: float = 1.0,
    drop: UserDrop | None = None,
) -> tuple[UserDrop, ScenarioState]:
    """Drop users, allocate pilots and set powers with the default simulation setup."""
    if drop is None:
        drop = make_drop(net, K, rng, kappa=kappa, shadow_var_db2=shadow_var_db2)
    coloring = reuse_coloring(net, beta)
    if beta_f > 0:
        alloc = allocate_refined(coloring, drop, K, beta, beta_f, rng)
    else:
        alloc = allocate_symmetric(coloring, K, beta, rng)
    powers = make_power_profile(drop, net.radius_m, rho_ul_db, edge_snr_db, sigma2)
    return drop, build_scenario(drop.gains, alloc, powers)

"""Uplink channel-inversion power control and downlink equal power allocation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import UserDrop


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class PowerProfile:
    p: np.ndarray  # (L, K) pilot powers
    tau: np.ndarray  # (L, K) virtual uplink payload powers
    rho_dl: np.ndarray  # (L, K) downlink powers
    sigma2: float
    rho_ul: float
    p_max: float

    def as_dict(self) -> dict:
        return {"sigma2": self.sigma2, "rho_ul": self.rho_ul, "p_max": self.p_max}


def channel_inversion(drop: UserDrop, rho_ul: float) -> tuple[np.ndarray, np.ndarray]:
    """Pilot and payload powers ``rho_ul / d_l(z_lk)`` (statistical channel inversion)."""
    serving = drop.serving_gains()
    if np.any(serving <= 0):
        raise ValueError("channel inversion needs strictly positive serving gains")
    p = rho_ul / serving
    return p, p.copy()


def calibrate_pmax(radius_m: float, kappa: float, target_edge_snr_db: float, sigma2: float = 1.0) -> float:
    """Downlink power giving ``target_edge_snr_db`` at the cell corner without shadowing."""
    d_edge = radius_m ** (-kappa)
    return db_to_linear(target_edge_snr_db) * sigma2 / d_edge


def make_power_profile(
    drop: UserDrop,
    radius_m: float,
    rho_ul_db: float = 0.0,
    edge_snr_db: float = -3.0,
    sigma2: float = 1.0,
) -> PowerProfile:
    rho_ul = db_to_linear(rho_ul_db) * sigma2
    p, tau = channel_inversion(drop, rho_ul)
    p_max = calibrate_pmax(radius_m, drop.kappa, edge_snr_db, sigma2)
    return PowerProfile(
        p=p, tau=tau, rho_dl=np.full_like(p, p_max), sigma2=sigma2, rho_ul=rho_ul, p_max=p_max
    )

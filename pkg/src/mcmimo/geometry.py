"""Hexagonal 19-cell wrap-around network, user drops and large-scale gains.

Cells are pointy-top hexagons with corner radius ``r``; adjacent base
stations sit ``sqrt(3) * r`` apart.  Cell positions are kept in axial lattice
coordinates ``(q, s)`` with basis vectors at 0 and 60 degrees, which makes the
torus identification a lattice reduction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

MIN_DISTANCE_FRACTION = 0.14

# Axial offsets of the six neighbours of a hexagonal cell.
NEIGHBOR_OFFSETS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))

# Translation generating the 19-cell torus (norm^2 = 19 in lattice units).
_CLUSTER_SHIFT = (5, -2)


def _rotate60(q: int, s: int) -> tuple[int, int]:
    return -s, q + s


def _axial_cells(rings: int) -> list[tuple[int, int]]:
    """Cells within hex distance ``rings`` of the origin, center first then ring by ring."""
    cells = [(0, 0)]
    for ring in range(1, rings + 1):
        # walk the ring starting at (ring, 0)
        q, s = ring, 0
        walk = ((-1, 1), (-1, 0), (0, -1), (1, -1), (1, 0), (0, 1))
        for dq, ds in walk:
            for _ in range(ring):
                cells.append((q, s))
                q, s = q + dq, s + ds
    return cells


@dataclass(frozen=True)
class NetworkGeometry:
    radius_m: float
    axial: np.ndarray  # (L, 2) integer lattice coordinates
    bs_positions: np.ndarray  # (L, 2) meters
    wrap_vectors: np.ndarray  # (7, 2) meters, row 0 is the zero vector
    wrap_axial: np.ndarray  # (7, 2) integer lattice coordinates

    @property
    def cell_count(self) -> int:
        return self.bs_positions.shape[0]

    @property
    def spacing_m(self) -> float:
        return float(np.sqrt(3.0) * self.radius_m)

    def to_json(self) -> str:
        return json.dumps(
            {
                "radius_m": self.radius_m,
                "cell_count": self.cell_count,
                "bs_positions": self.bs_positions.tolist(),
                "wrap_vectors": self.wrap_vectors.tolist(),
            },
            indent=2,
        )


def _lattice_basis(radius_m: float) -> np.ndarray:
    d = np.sqrt(3.0) * radius_m
    return np.array([[d, 0.0], [0.5 * d, 0.5 * np.sqrt(3.0) * d]])


def build_hex_network(radius_m: float = 500.0) -> NetworkGeometry:
    """Build the symmetric 19-cell wrap-around layout (center cell plus two rings)."""
    if not radius_m > 0:
        raise ValueError(f"radius_m must be positive, got {radius_m}")
    basis = _lattice_basis(radius_m)
    axial = np.array(_axial_cells(2), dtype=int)
    shifts = [(0, 0)]
    v = _CLUSTER_SHIFT
    for _ in range(6):
        shifts.append(v)
        v = _rotate60(*v)
    wrap_axial = np.array(shifts, dtype=int)
    return NetworkGeometry(
        radius_m=float(radius_m),
        axial=axial,
        bs_positions=axial @ basis,
        wrap_vectors=wrap_axial @ basis,
        wrap_axial=wrap_axial,
    )


def _torus_reduce(net: NetworkGeometry, z: np.ndarray) -> np.ndarray:
    """Shift points by whole torus periods so they land near the layout center."""
    period = net.wrap_vectors[1:3]  # two generators of the torus lattice
    coeff = z @ np.linalg.inv(period)
    return z - np.round(coeff) @ period


def _image_shifts(net: NetworkGeometry) -> np.ndarray:
    """Torus lattice vectors a*w1 + b*w2 with |a|, |b| <= 2 (enough for a reduced point)."""
    period = net.wrap_vectors[1:3]
    a, b = np.meshgrid(np.arange(-2, 3), np.arange(-2, 3), indexing="ij")
    return np.stack([a.ravel(), b.ravel()], axis=1) @ period


def wrap_distances(net: NetworkGeometry, z: np.ndarray) -> np.ndarray:
    """Minimum-image distances from points ``z`` (..., 2) to every BS, shape (..., L)."""
    z = _torus_reduce(net, np.asarray(z, dtype=float))
    shifts = _image_shifts(net)
    # (..., 1, 1, 2) + (S, 1, 2) - (1, L, 2)
    diff = z[..., None, None, :] + shifts[:, None, :] - net.bs_positions[None, :, :]
    return np.sqrt(np.einsum("...i,...i->...", diff, diff)).min(axis=-2)


def wrap_distance(net: NetworkGeometry, z: np.ndarray, j: int) -> float:
    if not 0 <= j < net.cell_count:
        raise IndexError(f"BS index {j} out of range 0..{net.cell_count - 1}")
    return float(wrap_distances(net, z)[..., j])


def in_hexagon(offset: np.ndarray, radius_m: float) -> np.ndarray:
    """Whether offsets (..., 2) from a cell center lie inside the pointy-top hexagon."""
    apothem = 0.5 * np.sqrt(3.0) * radius_m
    inside = np.ones(offset.shape[:-1], dtype=bool)
    for angle in (0.0, np.pi / 3, 2 * np.pi / 3):
        n = np.array([np.cos(angle), np.sin(angle)])
        inside &= np.abs(offset @ n) <= apothem
    return inside


def wrap_adjacency(net: NetworkGeometry) -> list[tuple[int, ...]]:
    """Neighbour lists of every cell on the torus."""
    index = {tuple(c): i for i, c in enumerate(net.axial.tolist())}

    def reduce(q: int, s: int) -> int:
        for tq, ts in net.wrap_axial.tolist():
            key = (q + tq, s + ts)
            if key in index:
                return index[key]
        raise ValueError(f"lattice point {(q, s)} not covered by the wrap vectors")

    return [
        tuple(sorted({reduce(q + dq, s + ds) for dq, ds in NEIGHBOR_OFFSETS}))
        for q, s in net.axial.tolist()
    ]


def sample_hexagon_offsets(
    radius_m: float, n: int, rng: np.random.Generator, min_fraction: float = MIN_DISTANCE_FRACTION
) -> np.ndarray:
    """Uniform points in the hexagon excluding the disc of radius ``min_fraction * r``."""
    apothem = 0.5 * np.sqrt(3.0) * radius_m
    out = np.empty((0, 2))
    while out.shape[0] < n:
        need = n - out.shape[0]
        # acceptance rate is ~0.71 for the default exclusion disc
        cand = rng.uniform(
            low=(-apothem, -radius_m), high=(apothem, radius_m), size=(2 * need + 8, 2)
        )
        keep = in_hexagon(cand, radius_m) & (np.hypot(cand[:, 0], cand[:, 1]) >= min_fraction * radius_m)
        out = np.concatenate([out, cand[keep]])
    return out[:n]


def drop_users(net: NetworkGeometry, K: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``K`` user positions per cell, shape (L, K, 2) in meters."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    L = net.cell_count
    offsets = np.stack([sample_hexagon_offsets(net.radius_m, K, rng) for _ in range(L)])
    return net.bs_positions[:, None, :] + offsets


def channel_gain(net: NetworkGeometry, z: np.ndarray, j: int, shadow_db: float, kappa: float) -> float:
    """Pathloss-plus-shadowing gain ``C / dist**kappa`` with ``10 log10 C = shadow_db``."""
    dist = wrap_distance(net, z, j)
    if dist <= 0:
        raise ValueError("zero distance to BS: pathloss is singular")
    return 10.0 ** (shadow_db / 10.0) / dist**kappa


@dataclass(frozen=True)
class UserDrop:
    """One realization of user positions and the large-scale gain tensor.

    ``gains[j, l, k]`` is the attenuation from user ``k`` of cell ``l`` to BS ``j``.
    """

    positions: np.ndarray  # (L, K, 2)
    distances: np.ndarray  # (L_bs, L, K) wrap-around distances
    shadowing_db: np.ndarray  # (L_bs, L, K)
    gains: np.ndarray  # (L_bs, L, K)
    kappa: float

    @property
    def cells(self) -> int:
        return self.positions.shape[0]

    @property
    def users_per_cell(self) -> int:
        return self.positions.shape[1]

    def serving_gains(self) -> np.ndarray:
        L = self.cells
        return self.gains[np.arange(L), np.arange(L), :]

    def serving_distances(self) -> np.ndarray:
        L = self.cells
        return self.distances[np.arange(L), np.arange(L), :]


def make_drop(
    net: NetworkGeometry,
    K: int,
    rng: np.random.Generator,
    kappa: float = 3.7,
    shadow_var_db2: float = 5.0,
    positions: np.ndarray | None = None,
) -> UserDrop:
    """Place users (unless ``positions`` is given) and draw per-link shadowing."""
    if positions is None:
        positions = drop_users(net, K, rng)
    dist = np.moveaxis(wrap_distances(net, positions), -1, 0)
    if np.any(dist <= 0):
        raise ValueError("a user coincides with a BS")
    shadow = rng.normal(0.0, np.sqrt(shadow_var_db2), size=dist.shape) if shadow_var_db2 > 0 else np.zeros_like(dist)
    gains = 10.0 ** (shadow / 10.0) / dist**kappa
    return UserDrop(positions=positions, distances=dist, shadowing_db=shadow, gains=gains, kappa=kappa)

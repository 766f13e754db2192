"""Pilot reuse groups and per-user pilot assignment.

Pilot indices are 0-based throughout (``0 .. B-1``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import NetworkGeometry, UserDrop, wrap_adjacency

SUPPORTED_BETAS = (1, 3, 4, 7)


@dataclass(frozen=True)
class PilotAllocation:
    B: int
    beta: int
    beta_f: float
    K: int
    coloring: np.ndarray  # (L,) reuse group of each cell
    index: np.ndarray  # (L, K) pilot of each user

    def pilot_classes(self) -> list[list[tuple[int, int]]]:
        """Users sharing each pilot, as (cell, user) pairs."""
        classes: list[list[tuple[int, int]]] = [[] for _ in range(self.B)]
        for l, row in enumerate(self.index.tolist()):
            for k, b in enumerate(row):
                classes[b].append((l, k))
        return classes

    def prelog(self, S: int) -> float:
        return 1.0 - self.B / S

    def to_json(self) -> str:
        return json.dumps(
            {
                "B": self.B,
                "beta": self.beta,
                "beta_f": self.beta_f,
                "coloring": self.coloring.tolist(),
                "index": self.index.tolist(),
            },
            indent=2,
        )


def _min_conflict_coloring(adjacency: tuple[tuple[int, ...], ...], n_colors: int) -> tuple[int, ...]:
    """Balanced coloring minimizing same-color neighbour pairs (exact branch and bound).

    Group sizes are restricted to ``floor(n/c)`` or ``ceil(n/c)``.  The 19-cell
    torus has chromatic number 5, so for 3 or 4 groups some conflicts remain.
    """
    n = len(adjacency)
    lo, hi = n // n_colors, -(-n // n_colors)
    # BFS order from cell 0 keeps conflicts local and prunes early
    order, seen = [0], {0}
    for v in order:
        for u in adjacency[v]:
            if u not in seen:
                seen.add(u)
                order.append(u)
    color = [-1] * n
    size = [0] * n_colors
    best_cost, best = n * n, None

    def search(i: int, cost: int, used: int) -> None:
        nonlocal best_cost, best
        if cost >= best_cost:
            return
        if i == n:
            if min(size) >= lo:
                best_cost, best = cost, tuple(color)
            return
        v = order[i]
        # colors beyond ``used`` are interchangeable; try only one fresh color
        for c in range(min(n_colors, used + 1)):
            if size[c] >= hi:
                continue
            extra = sum(1 for u in adjacency[v] if color[u] == c)
            color[v] = c
            size[c] += 1
            search(i + 1, cost + extra, max(used, c + 1))
            size[c] -= 1
            color[v] = -1

    search(0, 0, 0)
    assert best is not None
    return best


@lru_cache(maxsize=None)
def _cached_coloring(adjacency: tuple[tuple[int, ...], ...], beta: int) -> tuple[int, ...]:
    if beta == 1:
        return (0,) * len(adjacency)
    return _min_conflict_coloring(adjacency, beta)


def reuse_coloring(net: NetworkGeometry, beta: int) -> np.ndarray:
    """Assign each cell one of ``beta`` pilot groups."""
    if beta not in SUPPORTED_BETAS:
        raise ValueError(f"unsupported reuse factor {beta}; expected one of {SUPPORTED_BETAS}")
    adjacency = tuple(wrap_adjacency(net))
    return np.array(_cached_coloring(adjacency, beta), dtype=int)


def coloring_conflicts(net: NetworkGeometry, coloring: np.ndarray) -> int:
    """Number of adjacent cell pairs sharing a group."""
    adj = wrap_adjacency(net)
    return sum(1 for v, nb in enumerate(adj) for u in nb if u > v and coloring[u] == coloring[v])


def allocate_symmetric(coloring: np.ndarray, K: int, beta: int, rng: np.random.Generator) -> PilotAllocation:
    """Cell in group ``g`` uses pilots ``gK .. (g+1)K - 1`` in random order."""
    coloring = np.asarray(coloring, dtype=int)
    if coloring.min() < 0 or coloring.max() >= beta:
        raise ValueError("coloring uses groups outside 0..beta-1")
    index = np.empty((coloring.size, K), dtype=int)
    for l, g in enumerate(coloring):
        index[l] = g * K + rng.permutation(K)
    return PilotAllocation(B=beta * K, beta=beta, beta_f=0.0, K=K, coloring=coloring, index=index)


def center_user_count(K: int, beta_f: float) -> int:
    n_center = beta_f * K
    if not 0.0 <= beta_f <= 1.0:
        raise ValueError(f"beta_f must lie in [0, 1], got {beta_f}")
    if abs(n_center - round(n_center)) > 1e-9:
        raise ValueError(f"beta_f * K = {n_center} is not an integer")
    return int(round(n_center))


def refined_pilot_count(K: int, beta: int, beta_f: float) -> int:
    n_center = center_user_count(K, beta_f)
    return n_center + beta * (K - n_center)


def allocate_refined(
    coloring: np.ndarray,
    drop: UserDrop,
    K: int,
    beta: int,
    beta_f: float,
    rng: np.random.Generator,
) -> PilotAllocation:
    """Cell-center users share common pilots, edge users follow the reuse groups.

    The ``beta_f * K`` users closest to their serving BS get pilots
    ``0 .. n_c - 1`` in every cell; the rest get the group scheme on the
    remaining ``beta * (K - n_c)`` pilots.  With ``beta_f = 0`` the random
    draws match :func:`allocate_symmetric` exactly.
    """
    coloring = np.asarray(coloring, dtype=int)
    n_c = center_user_count(K, beta_f)
    n_e = K - n_c
    dist = drop.serving_distances()
    if dist.shape != (coloring.size, K):
        raise ValueError(f"drop has shape {dist.shape}, expected {(coloring.size, K)}")
    index = np.empty((coloring.size, K), dtype=int)
    for l, g in enumerate(coloring):
        by_distance = np.argsort(dist[l], kind="stable")
        center = by_distance[:n_c]
        edge = np.sort(by_distance[n_c:])
        if n_e:
            index[l, edge] = n_c + g * n_e + rng.permutation(n_e)
        if n_c:
            index[l, center] = rng.permutation(n_c)
    return PilotAllocation(
        B=n_c + beta * n_e, beta=beta, beta_f=float(beta_f), K=K, coloring=coloring, index=index
    )

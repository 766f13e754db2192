"""Experiment configuration: JSON loading, defaults and validation."""

from __future__ import annotations

import itertools
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .pilots import SUPPORTED_BETAS, center_user_count, refined_pilot_count
from .precoding import Scheme

OUTPUT_DIR_ENV = "MCMIMO_OUTPUT_DIR"
MC_MODES = ("conditional", "full")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``problems`` lists every violation found."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))


@dataclass(frozen=True)
class SweepPoint:
    index: int
    M: int
    K: int
    beta: int
    beta_f: float
    B: int


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep over (K, beta, beta_f, M).

    Physical defaults: 500 m cells, pathloss exponent 3.7, 5 dB^2 shadowing
    variance, S = 500, 0 dB uplink SNR and -3 dB cell-edge downlink SNR.
    """

    M: list = field(default_factory=lambda: [100])
    K: list = field(default_factory=lambda: [10])
    beta: list = field(default_factory=lambda: [1])
    beta_f: list = field(default_factory=lambda: [0.0])
    schemes: list = field(default_factory=lambda: ["m-mmse"])
    S: int = 500
    r: float = 500.0
    kappa: float = 3.7
    sigma_sf_sq: float = 5.0
    rho_ul_db: float = 0.0
    edge_snr_db: float = -3.0
    n_drops: int = 50
    n_realizations: int = 1000
    master_seed: int = 0
    output_path: str = "results"
    label: str = "experiment"
    mc_mode: str = "conditional"
    deterministic_equivalent: bool = True  # add large-scale rows for m-mmse
    skip_infeasible: bool = False  # emit "infeasible" rows (B >= S, or m-zf with M <= B) instead of rejecting
    workers: int | None = None
    batch: int = 16

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"unknown field {name!r}" for name in unknown])
        data = dict(data)
        for key in ("M", "K", "beta", "beta_f", "schemes"):
            if key in data and not isinstance(data[key], list):
                data[key] = [data[key]]
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: not valid JSON ({exc})"]) from None
        if not isinstance(data, dict):
            raise ConfigError([f"{path}: top level must be an object"])
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        problems = []
        if not self.schemes:
            problems.append("schemes is empty")
        for s in self.schemes:
            try:
                Scheme.parse(s)
            except ValueError as exc:
                problems.append(str(exc))
        for name in ("M", "K", "beta", "beta_f"):
            if not getattr(self, name):
                problems.append(f"{name} is empty")
        problems += [f"M must be a positive integer, got {m!r}" for m in self.M if not _positive_int(m)]
        problems += [f"K must be a positive integer, got {k!r}" for k in self.K if not _positive_int(k)]
        problems += [f"beta must be one of {SUPPORTED_BETAS}, got {b!r}" for b in self.beta if b not in SUPPORTED_BETAS]
        for name in ("S", "n_drops", "n_realizations", "batch"):
            if not _positive_int(getattr(self, name)):
                problems.append(f"{name} must be a positive integer")
        if self.workers is not None and not _positive_int(self.workers):
            problems.append("workers must be a positive integer or null")
        if self.mc_mode not in MC_MODES:
            problems.append(f"mc_mode must be one of {MC_MODES}")
        if self.r <= 0 or self.kappa <= 0 or self.sigma_sf_sq < 0:
            problems.append("r and kappa must be positive and sigma_sf_sq non-negative")
        if problems:
            raise ConfigError(problems)

        zf = Scheme.M_ZF.value in [Scheme.parse(s).value for s in self.schemes]
        for K, beta, beta_f in itertools.product(self.K, self.beta, self.beta_f):
            try:
                center_user_count(K, beta_f)
            except ValueError as exc:
                problems.append(f"K={K}: {exc}")
                continue
            B = refined_pilot_count(K, beta, beta_f)
            if B >= self.S and not self.skip_infeasible:
                problems.append(f"K={K}, beta={beta}, beta_f={beta_f}: B={B} leaves no data symbols (S={self.S})")
            if zf and not self.skip_infeasible:
                problems += [
                    f"m-zf needs M > B: M={M}, K={K}, beta={beta}, beta_f={beta_f} gives B={B}"
                    for M in self.M
                    if M <= B
                ]
        if problems:
            raise ConfigError(problems)

    def sweep_points(self) -> list[SweepPoint]:
        """Sweep points in a fixed order: K, beta, beta_f outer, M innermost."""
        points = []
        for K, beta, beta_f, M in itertools.product(self.K, self.beta, self.beta_f, self.M):
            B = refined_pilot_count(K, beta, beta_f)
            points.append(SweepPoint(len(points), int(M), int(K), int(beta), float(beta_f), B))
        return points

    def output_dir(self) -> Path:
        """``output_path``, re-rooted under ``$MCMIMO_OUTPUT_DIR`` when it is set."""
        override = os.environ.get(OUTPUT_DIR_ENV)
        path = Path(self.output_path)
        if override:
            return Path(override) / path.name
        return path


def _positive_int(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool) and x > 0


# seed splitting: every stream is a SeedSequence keyed by integers only, so
# results never depend on scheduling or on which worker ran a unit.
DROP_STREAM, PILOT_STREAM, FADING_STREAM = 0, 1, 2


def drop_seed(master: int, K: int, drop: int) -> np.random.SeedSequence:
    """User positions and shadowing; shared by every (beta, beta_f, M) with this K."""
    return np.random.SeedSequence([master, DROP_STREAM, K, drop])


def pilot_seed(master: int, K: int, drop: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master, PILOT_STREAM, K, drop])


def fading_seed(master: int, point: int, drop: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master, FADING_STREAM, point, drop])

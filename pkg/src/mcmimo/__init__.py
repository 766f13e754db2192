"""Multi-cell massive MIMO downlink simulation with multi-cell MMSE precoding."""

from .config import ConfigError, ExperimentConfig
from .geometry import NetworkGeometry, UserDrop, build_hex_network, make_drop
from .mc_eval import SEReport, evaluate
from .pilots import PilotAllocation, allocate_refined, allocate_symmetric, reuse_coloring
from .power import PowerProfile, make_power_profile
from .precoding import InfeasibleError, Scheme
from .rmt import DeterministicEquivalent, large_scale_sinr
from .scenario import ScenarioState, build_scenario, standard_scenario

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DeterministicEquivalent",
    "ExperimentConfig",
    "InfeasibleError",
    "NetworkGeometry",
    "PilotAllocation",
    "PowerProfile",
    "SEReport",
    "ScenarioState",
    "Scheme",
    "UserDrop",
    "allocate_refined",
    "allocate_symmetric",
    "build_hex_network",
    "build_scenario",
    "evaluate",
    "large_scale_sinr",
    "make_drop",
    "make_power_profile",
    "standard_scenario",
    "reuse_coloring",
]

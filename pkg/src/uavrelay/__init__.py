"""Relay-UAV path planning laboratory.

Terrain and placement (``world``), link budgets with knife-edge diffraction
(``channel``), coverage maps (``coverage``), PCA state compression (``pca``),
a numpy network stack (``nn``), replay buffers (``replay``), the MDP and
TD3-family agents (``rl``) and experiment campaigns (``harness``).
"""

from .channel import ChannelParams, fspl_bs, fspl_uav, knife_edge_j, ked_loss, link_budget
from .config import ExperimentConfig, load_config
from .coverage import CoverageMap, compute_coverage_map, map_mae
from .harness import convergence_point, episodes_to_threshold, pca_fidelity_report, run_campaign
from .pca import CoveragePCA, jacobi_eigh
from .replay import PrioritizedReplayBuffer, Transition, UniformReplayBuffer
from .rl import EnvConfig, RelayEnv, RewardWeights, TD3Agent, build_agent
from .world import Box, Position3D, Scenario, TerrainGrid, generate_terrain, load_heightmap, place_scenario

__version__ = "0.1.0"

__all__ = [
    "Box",
    "ChannelParams",
    "CoverageMap",
    "CoveragePCA",
    "EnvConfig",
    "ExperimentConfig",
    "Position3D",
    "PrioritizedReplayBuffer",
    "RelayEnv",
    "RewardWeights",
    "Scenario",
    "TD3Agent",
    "TerrainGrid",
    "Transition",
    "UniformReplayBuffer",
    "build_agent",
    "compute_coverage_map",
    "convergence_point",
    "episodes_to_threshold",
    "fspl_bs",
    "fspl_uav",
    "generate_terrain",
    "jacobi_eigh",
    "ked_loss",
    "knife_edge_j",
    "link_budget",
    "load_heightmap",
    "map_mae",
    "pca_fidelity_report",
    "place_scenario",
    "run_campaign",
]

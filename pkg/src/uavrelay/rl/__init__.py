from .agent import AGENT_KINDS, KIND_PRESETS, LOG_FIELDS, FULL_NETWORK, TD3Agent, build_agent, normalize_kind
from .env import EnvConfig, EnvState, RelayEnv, RewardWeights, compute_r2, compute_r3, resample_grid

__all__ = [
    "AGENT_KINDS",
    "KIND_PRESETS",
    "LOG_FIELDS",
    "FULL_NETWORK",
    "EnvConfig",
    "EnvState",
    "RelayEnv",
    "RewardWeights",
    "TD3Agent",
    "build_agent",
    "compute_r2",
    "compute_r3",
    "normalize_kind",
    "resample_grid",
]

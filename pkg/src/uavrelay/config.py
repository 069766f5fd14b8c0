"""Experiment configuration: nested JSON with strict keys and a canonical hash.

A config has the sections ``scenario``, ``channel``, ``env``, ``pca``,
``network``, ``agent``, ``agents_hyper``, ``convergence`` and ``campaign``.
Every field has a default, so a file only lists what it overrides. Bundled
presets (``desk``, ``paper``) ship inside the package.
"""

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from .channel import ChannelParams
from .rl.agent import AGENT_KINDS, FULL_NETWORK, normalize_kind
from .rl.env import EnvConfig, RewardWeights
from .validation import check_fraction, check_int, check_positive
from .world import MAX_USER_SPREAD, default_bounds, generate_terrain, load_heightmap, place_scenario

PRESETS = ("desk", "paper")
SCENARIO_MODES = ("per_run", "fixed")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class ScenarioSpec:
    width_cells: int = 65
    height_cells: int = 65
    cell_size: float = 100.0
    roughness: float = 80.0
    forest_fraction: float = 0.3
    base_elevation: float = 0.0
    terrain_file: str = ""
    n_users: int = 15
    max_user_spread: float = MAX_USER_SPREAD
    z_min: float = 10.0
    z_max: float = 300.0

    def __post_init__(self):
        if not self.terrain_file:
            check_int(self.width_cells, "scenario.width_cells", minimum=2)
            check_int(self.height_cells, "scenario.height_cells", minimum=2)
            check_positive(self.cell_size, "scenario.cell_size")
        check_int(self.n_users, "scenario.n_users", minimum=1)
        check_positive(self.max_user_spread, "scenario.max_user_spread")
        if not self.z_min <= self.z_max:
            raise ConfigError("scenario.z_min must not exceed scenario.z_max")

    def build(self, seed):
        """Terrain and placement for one seed (the terrain file, when set, is fixed)."""
        if self.terrain_file:
            terrain = load_heightmap(self.terrain_file)
        else:
            terrain = generate_terrain(
                seed, self.width_cells, self.height_cells, self.cell_size,
                self.roughness, self.forest_fraction, self.base_elevation,
            )
        bounds = default_bounds(terrain, self.z_min, self.z_max)
        return place_scenario(seed, terrain, self.n_users, bounds, max_user_spread=self.max_user_spread)


@dataclass(frozen=True)
class PcaSpec:
    variance_target: float = 0.995
    n_maps: int = 128
    fidelity_maps: int = 100
    fidelity_targets: tuple = (0.96, 0.98, 0.995)

    def __post_init__(self):
        check_fraction(self.variance_target, "pca.variance_target", low_open=True)
        check_int(self.n_maps, "pca.n_maps", minimum=2)
        check_int(self.fidelity_maps, "pca.fidelity_maps", minimum=2)
        for t in self.fidelity_targets:
            check_fraction(t, "pca.fidelity_targets", low_open=True)


@dataclass(frozen=True)
class ConvergenceSpec:
    window: int = 10
    theta: float = 0.9
    baseline: str = "start"

    def __post_init__(self):
        check_int(self.window, "convergence.window", minimum=1)
        check_fraction(self.theta, "convergence.theta", low_open=True)
        if self.baseline not in ("start", "zero"):
            raise ConfigError("convergence.baseline must be 'start' or 'zero'")


@dataclass(frozen=True)
class CampaignSpec:
    agents: tuple = AGENT_KINDS
    runs: int = 10
    episodes: int = 150
    seed_base: int = 0
    scenario_mode: str = "per_run"
    parallel: int = 1

    def __post_init__(self):
        check_int(self.runs, "campaign.runs", minimum=1)
        check_int(self.episodes, "campaign.episodes", minimum=1)
        check_int(self.seed_base, "campaign.seed_base")
        check_int(self.parallel, "campaign.parallel", minimum=1)
        if self.scenario_mode not in SCENARIO_MODES:
            raise ConfigError(f"campaign.scenario_mode must be one of {SCENARIO_MODES}")
        if not self.agents:
            raise ConfigError("campaign.agents must not be empty")

    def scenario_seed(self, run):
        return self.seed_base if self.scenario_mode == "fixed" else self.seed_base + run


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    channel: ChannelParams = field(default_factory=ChannelParams)
    env: EnvConfig = field(default_factory=EnvConfig)
    pca: PcaSpec = field(default_factory=PcaSpec)
    network: dict = field(default_factory=lambda: dict(FULL_NETWORK))
    agent: dict = field(default_factory=dict)
    agents_hyper: dict = field(default_factory=dict)
    convergence: ConvergenceSpec = field(default_factory=ConvergenceSpec)
    campaign: CampaignSpec = field(default_factory=CampaignSpec)

    def replace(self, **sections):
        """Copy with whole sections or campaign fields (``runs=3``) swapped."""
        camp_keys = set(CampaignSpec.__dataclass_fields__)
        camp = {k: sections.pop(k) for k in list(sections) if k in camp_keys}
        d = {name: getattr(self, name) for name in self.__dataclass_fields__}
        d.update(sections)
        if camp:
            base = asdict(d["campaign"])
            base.update(camp)
            d["campaign"] = _build(CampaignSpec, base, "campaign")
        return ExperimentConfig(**d)

    def hyper_for(self, kind):
        """Agent keyword overrides for ``kind``: shared ``agent`` then per-kind."""
        kind = normalize_kind(kind)
        out = dict(self.agent)
        out.update(self.agents_hyper.get(kind, {}))
        return out

    def to_dict(self):
        env = asdict(self.env)
        env.pop("channel")
        return {
            "scenario": asdict(self.scenario),
            "channel": asdict(self.channel),
            "env": env,
            "pca": {**asdict(self.pca), "fidelity_targets": list(self.pca.fidelity_targets)},
            "network": copy.deepcopy(self.network),
            "agent": dict(self.agent),
            "agents_hyper": copy.deepcopy(self.agents_hyper),
            "convergence": asdict(self.convergence),
            "campaign": {**asdict(self.campaign), "agents": list(self.campaign.agents)},
        }

    def hash(self):
        """SHA-256 of the canonical JSON form (sorted keys, no whitespace)."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _build(cls, data, section):
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be a JSON object")
    known = set(cls.__dataclass_fields__)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(unknown)}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


_AGENT_KEYS = {
    "policy_delay", "policy_noise", "noise_clip", "expl_sigma0", "expl_decay", "huber_delta",
    "per_alpha", "per_beta0", "per_eps", "buffer_capacity", "actor_lr", "critic_lr", "gamma",
    "batch_size", "tau", "state_mode", "n_frames", "replay", "loss",
}
_NETWORK_KEYS = set(FULL_NETWORK)
_SECTIONS = set(ExperimentConfig.__dataclass_fields__)


def _check_agent_dict(d, section):
    if not isinstance(d, dict):
        raise ConfigError(f"section {section!r} must be a JSON object")
    unknown = sorted(set(d) - _AGENT_KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(unknown)}")
    return dict(d)


def config_from_dict(data):
    """Validate a parsed JSON document and build an ``ExperimentConfig``."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - _SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")

    scenario = _build(ScenarioSpec, data.get("scenario", {}), "scenario")
    channel = _build(ChannelParams, data.get("channel", {}), "channel")
    env_d = dict(data.get("env", {}))
    if "weights" in env_d:
        env_d["weights"] = _build(RewardWeights, env_d["weights"], "env.weights")
    if "channel" in env_d:
        raise ConfigError("channel parameters belong in the top-level 'channel' section")
    env_d["channel"] = channel
    env = _build(EnvConfig, env_d, "env")

    pca_d = dict(data.get("pca", {}))
    if "fidelity_targets" in pca_d:
        pca_d["fidelity_targets"] = tuple(pca_d["fidelity_targets"])
    pca = _build(PcaSpec, pca_d, "pca")

    network = dict(FULL_NETWORK)
    net_d = data.get("network", {})
    if not isinstance(net_d, dict):
        raise ConfigError("section 'network' must be a JSON object")
    unknown = sorted(set(net_d) - _NETWORK_KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s) in 'network': {', '.join(unknown)}")
    network.update(net_d)
    lens = {len(network[k]) for k in ("channels", "kernels", "strides")}
    if len(lens) != 1:
        raise ConfigError("network.channels, kernels and strides must have equal lengths")

    agent = _check_agent_dict(data.get("agent", {}), "agent")
    hyper = {}
    for kind, d in dict(data.get("agents_hyper", {})).items():
        try:
            key = normalize_kind(kind)
        except ValueError as exc:
            raise ConfigError(f"agents_hyper: {exc}") from None
        hyper[key] = _check_agent_dict(d, f"agents_hyper.{kind}")

    conv = _build(ConvergenceSpec, data.get("convergence", {}), "convergence")
    camp_d = dict(data.get("campaign", {}))
    if "agents" in camp_d:
        try:
            camp_d["agents"] = tuple(normalize_kind(k) for k in camp_d["agents"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"campaign.agents: {exc}") from None
    campaign = _build(CampaignSpec, camp_d, "campaign")

    for name in ("max_step",):
        if not math.isfinite(getattr(env, name)):
            raise ConfigError(f"env.{name} must be finite")
    return ExperimentConfig(scenario, channel, env, pca, network, agent, hyper, conv, campaign)


def preset_path(name):
    return resources.files("uavrelay") / "configs" / f"{name}.json"


def load_config(source):
    """Load a config from a preset name (``desk``/``paper``) or a JSON file path."""
    if isinstance(source, ExperimentConfig):
        return source
    if isinstance(source, dict):
        return config_from_dict(source)
    source = str(source)
    if source in PRESETS:
        text = preset_path(source).read_text()
    else:
        path = Path(source)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {source}")
        text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON ({exc})") from None
    return config_from_dict(data)

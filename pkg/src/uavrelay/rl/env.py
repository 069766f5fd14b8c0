"""Relay-UAV MDP: coverage-map states, Δ-position actions, weighted rewards."""

from dataclasses import dataclass, field

import numpy as np
from sklearn.utils.validation import check_is_fitted

from ..channel import ChannelParams, user_powers
from ..coverage import compute_coverage_map
from ..validation import check_int, check_positive
from ..world import Position3D

STATE_MODES = ("raw", "pca")


@dataclass(frozen=True)
class RewardWeights:
    c1: float = 1.0 / 3.0
    c2: float = 1.0 / 3.0
    c3: float = 1.0 / 3.0

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3) < 0 or self.c1 + self.c2 + self.c3 <= 0:
            raise ValueError("reward weights must be non-negative with a positive sum")

    def combine(self, r1, r2, r3):
        return self.c1 * r1 + self.c2 * r2 + self.c3 * r3


@dataclass(frozen=True)
class EnvConfig:
    max_step: float = 50.0
    episode_len: int = 100
    min_user_power: float = -90.0
    weights: RewardWeights = field(default_factory=RewardWeights)
    channel: ChannelParams = field(default_factory=ChannelParams)
    raw_size: int = 30
    raw_ref_dbm: float = -80.0
    raw_scale_db: float = 20.0
    min_image_side: int = 6

    def __post_init__(self):
        check_positive(self.max_step, "max_step")
        check_int(self.episode_len, "episode_len", minimum=1)
        check_int(self.raw_size, "raw_size", minimum=1)


@dataclass
class EnvState:
    """``frame_stack`` holds the newest frame last; ``pose`` is the UAV position."""

    frame_stack: np.ndarray
    positions_aux: np.ndarray
    step_index: int
    pose: Position3D
    image: np.ndarray

    @property
    def aux(self):
        return self.positions_aux


def compute_r3(user_powers_dbm, min_user_power):
    """``|min_user_power| / mean(|P_user|)`` over users' received powers (dBm)."""
    p = np.asarray(user_powers_dbm, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("compute_r3 needs at least one user power")
    denom = np.mean(np.abs(p))
    if denom == 0:
        raise ValueError("mean user power magnitude is zero")
    return float(abs(min_user_power) / denom)


def compute_r2(prev_pose, new_pose, users):
    """Signed displacement ratio: ``±|Δ| / mean user distance`` at the new pose.

    Positive when the mean user distance shrank over the step.
    """
    prev, new = prev_pose.as_array(), new_pose.as_array()
    before = np.mean(np.linalg.norm(users - prev, axis=1))
    after = np.mean(np.linalg.norm(users - new, axis=1))
    moved = float(np.linalg.norm(new - prev))
    if moved == 0.0:
        return 0.0
    sign = 1.0 if after < before else -1.0
    return sign * moved / after


def resample_grid(values, side):
    """Bilinear resample of a 2-D grid to ``side x side``."""
    h, w = values.shape
    ys = np.linspace(0.0, h - 1, side)
    xs = np.linspace(0.0, w - 1, side)
    iy = np.minimum(np.floor(ys).astype(int), max(h - 2, 0))
    ix = np.minimum(np.floor(xs).astype(int), max(w - 2, 0))
    ty = (ys - iy)[:, None]
    tx = (xs - ix)[None, :]
    iy1, ix1 = np.minimum(iy + 1, h - 1), np.minimum(ix + 1, w - 1)
    top = values[np.ix_(iy, ix)] * (1 - tx) + values[np.ix_(iy, ix1)] * tx
    bot = values[np.ix_(iy1, ix)] * (1 - tx) + values[np.ix_(iy1, ix1)] * tx
    return top * (1 - ty) + bot * ty


class RelayEnv:
    """One relay UAV flying over a fixed scenario.

    ``state_mode='pca'`` turns each coverage map into whitened PCA scores and
    stacks the last ``n_frames`` as image rows (zero-padded so the convolution
    stack accepts it); ``'raw'`` feeds the map resampled to ``raw_size``.
    """

    def __init__(self, scenario, config=None, pca=None, state_mode="pca", n_frames=4):
        if state_mode not in STATE_MODES:
            raise ValueError(f"unknown state_mode {state_mode!r}; expected one of {STATE_MODES}")
        self.scenario = scenario
        self.config = config or EnvConfig()
        self.state_mode = state_mode
        self.n_frames = check_int(n_frames, "n_frames", minimum=1)
        self.pca = pca
        if state_mode == "pca":
            if pca is None:
                raise RuntimeError("PCA state mode needs a fitted CoveragePCA")
            check_is_fitted(pca, "components_")
            if pca.n_features_in_ != scenario.terrain.elevations.size:
                raise ValueError("PCA model was fitted on maps of a different size")
            if pca.n_components_ < 1:
                raise ValueError("PCA model retains no components")
            self._score_scale = np.sqrt(pca.eigenvalues_[: pca.n_components_])
        self._users = scenario.user_array()
        self.state = None

    @property
    def frame_len(self):
        if self.state_mode == "pca":
            return self.pca.n_components_
        return self.config.raw_size**2

    @property
    def image_shape(self):
        if self.state_mode == "raw":
            side = max(self.config.raw_size, self.config.min_image_side)
            return (1, side, side)
        m = self.config.min_image_side
        return (1, max(self.n_frames, m), max(self.frame_len, m))

    @property
    def aux_len(self):
        return 3 * (2 + self.scenario.n_users)

    def _frame(self, pose):
        cmap = compute_coverage_map(self.scenario, pose, self.config.channel)
        if self.state_mode == "pca":
            return self.pca.project(cmap) / self._score_scale
        raw = resample_grid(cmap.values, self.config.raw_size)
        return ((raw - self.config.raw_ref_dbm) / self.config.raw_scale_db).ravel()

    def _image(self, frames):
        out = np.zeros(self.image_shape)
        if self.state_mode == "raw":
            side = self.config.raw_size
            out[0, :side, :side] = frames[-1].reshape(side, side)
        else:
            out[0, : self.n_frames, : self.frame_len] = frames
        return out

    def _aux(self, pose):
        b = self.scenario.bounds
        pts = np.vstack([pose.as_array(), self.scenario.bs.as_array(), self._users])
        return b.normalize(pts).ravel()

    def _make_state(self, frames, pose, step):
        return EnvState(frames, self._aux(pose), step, pose, self._image(frames))

    def reset(self, seed=None):
        """Start at the scenario's initial pose; every stacked frame is the initial one."""
        pose = self.scenario.uav_init
        frame = self._frame(pose)
        frames = np.repeat(frame[None, :], self.n_frames, axis=0)
        self.state = self._make_state(frames, pose, 0)
        return self.state

    def step(self, action):
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        action = np.asarray(action, dtype=float).ravel()
        if action.shape != (3,) or not np.all(np.isfinite(action)):
            raise ValueError(f"action must be 3 finite numbers, got {action!r}")
        cfg = self.config
        bounds = self.scenario.bounds
        action = np.clip(action, -cfg.max_step, cfg.max_step)
        prev = self.state.pose
        candidate = Position3D.from_array(prev.as_array() + action)
        r1 = 1.0 if bounds.contains(candidate) else 0.0
        pose = bounds.clamp(candidate)

        frame = self._frame(pose)
        frames = np.vstack([self.state.frame_stack[1:], frame[None, :]])
        r2 = compute_r2(prev, pose, self._users)
        powers = user_powers(self.scenario, pose, cfg.channel)
        r3 = compute_r3(powers, cfg.min_user_power)
        reward = cfg.weights.combine(r1, r2, r3)

        step = self.state.step_index + 1
        self.state = self._make_state(frames, pose, step)
        done = step >= cfg.episode_len
        info = {"r1": r1, "r2": r2, "r3": r3, "user_powers": powers, "action": action}
        return self.state, reward, done, info

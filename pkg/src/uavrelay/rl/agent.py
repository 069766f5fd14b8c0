"""TD3-family agents as scikit-learn style estimators.

``TD3Agent.fit(env, episodes)`` trains online against a ``RelayEnv`` and
``predict(state)`` returns the greedy action. ``build_agent`` fills in the
per-variant presets (baseline TD3, TD3 with PCA state, enhanced TD3).
"""

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..nn import Adam, Network, build_spec, huber_loss, mse_loss, soft_update
from ..replay import PrioritizedReplayBuffer, Transition, UniformReplayBuffer

AGENT_KINDS = ("TD3", "TD3_PCA", "E_TD3")
CLI_NAMES = {"td3": "TD3", "td3pca": "TD3_PCA", "etd3": "E_TD3"}

FULL_NETWORK = {
    "channels": [32, 64, 64],
    "kernels": [4, 2, 1],
    "strides": [2, 1, 1],
    "dense": [512, 256],
    "linear": [256],
    "slope": 0.01,
}

# learning rates, discount, batch and soft-update factor per variant
KIND_PRESETS = {
    "TD3": dict(actor_lr=1e-3, critic_lr=4.0e-4, gamma=0.99, batch_size=100, tau=0.005,
                state_mode="raw", n_frames=1, replay="uniform", loss="mse"),
    "TD3_PCA": dict(actor_lr=1e-3, critic_lr=5e-4, gamma=0.95, batch_size=100, tau=0.005,
                    state_mode="pca", n_frames=1, replay="uniform", loss="mse"),
    "E_TD3": dict(actor_lr=1e-5, critic_lr=6.4e-4, gamma=0.95, batch_size=100, tau=0.005,
                  state_mode="pca", n_frames=4, replay="per", loss="huber"),
}

LOG_FIELDS = (
    "run_id", "episode", "mean_step_reward", "r1_mean", "r2_mean", "r3_mean",
    "critic1_loss", "critic2_loss", "actor_loss", "epsilon_sigma",
)


def normalize_kind(kind):
    if kind in AGENT_KINDS:
        return kind
    if isinstance(kind, str) and kind.lower() in CLI_NAMES:
        return CLI_NAMES[kind.lower()]
    raise ValueError(f"unknown agent kind {kind!r}; expected one of {AGENT_KINDS} or {sorted(CLI_NAMES)}")


class TD3Agent(BaseEstimator):
    """Twin-critic deterministic actor-critic with delayed policy updates.

    Exploration noise has standard deviation ``expl_sigma0 * expl_decay**episode``
    (as a fraction of ``max_step``); target-policy smoothing noise is
    ``policy_noise`` clipped to ``noise_clip`` (same units). With
    ``replay='per'`` the critic losses are importance weighted and priorities
    track critic-1 TD errors.
    """

    def __init__(
        self,
        kind="E_TD3",
        state_mode="pca",
        n_frames=4,
        replay="per",
        loss="huber",
        actor_lr=1e-5,
        critic_lr=6.4e-4,
        gamma=0.95,
        batch_size=100,
        tau=0.005,
        policy_delay=2,
        policy_noise=0.2,
        noise_clip=0.5,
        expl_sigma0=0.3,
        expl_decay=0.995,
        huber_delta=1.0,
        per_alpha=0.6,
        per_beta0=0.4,
        per_eps=1e-3,
        buffer_capacity=100_000,
        network=None,
        max_step=50.0,
        seed=0,
    ):
        self.kind = kind
        self.state_mode = state_mode
        self.n_frames = n_frames
        self.replay = replay
        self.loss = loss
        self.actor_lr = actor_lr
        self.critic_lr = critic_lr
        self.gamma = gamma
        self.batch_size = batch_size
        self.tau = tau
        self.policy_delay = policy_delay
        self.policy_noise = policy_noise
        self.noise_clip = noise_clip
        self.expl_sigma0 = expl_sigma0
        self.expl_decay = expl_decay
        self.huber_delta = huber_delta
        self.per_alpha = per_alpha
        self.per_beta0 = per_beta0
        self.per_eps = per_eps
        self.buffer_capacity = buffer_capacity
        self.network = network
        self.max_step = max_step
        self.seed = seed

    # -- construction ------------------------------------------------------

    def initialize(self, image_shape, aux_len, action_dim=3):
        """Allocate networks, optimizers and the replay buffer."""
        if self.replay not in ("uniform", "per"):
            raise ValueError(f"replay must be 'uniform' or 'per', got {self.replay!r}")
        if self.loss not in ("mse", "huber"):
            raise ValueError(f"loss must be 'mse' or 'huber', got {self.loss!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma!r}")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")
        widths = dict(FULL_NETWORK if self.network is None else self.network)
        seed = int(self.seed)
        self.action_dim_ = action_dim
        self.image_shape_ = tuple(image_shape)
        self.aux_len_ = aux_len
        self.actor_ = Network(build_spec(aux_len, action_dim, squash=True, **widths), image_shape, seed=seed * 7 + 1)
        self.critic1_ = Network(build_spec(aux_len + action_dim, 1, **widths), image_shape, seed=seed * 7 + 2)
        self.critic2_ = Network(build_spec(aux_len + action_dim, 1, **widths), image_shape, seed=seed * 7 + 3)
        self.actor_target_ = self.actor_.clone()
        self.critic1_target_ = self.critic1_.clone()
        self.critic2_target_ = self.critic2_.clone()
        self.actor_opt_ = Adam(self.actor_.params, lr=self.actor_lr)
        self.critic1_opt_ = Adam(self.critic1_.params, lr=self.critic_lr)
        self.critic2_opt_ = Adam(self.critic2_.params, lr=self.critic_lr)
        if self.replay == "per":
            self.buffer_ = PrioritizedReplayBuffer(
                self.buffer_capacity, alpha=self.per_alpha, eps=self.per_eps, seed=seed * 7 + 4
            )
        else:
            self.buffer_ = UniformReplayBuffer(self.buffer_capacity, seed=seed * 7 + 4)
        self.rng_ = np.random.default_rng(seed * 7 + 5)
        self.total_it_ = 0
        self.n_critic_updates_ = 0
        self.n_actor_updates_ = 0
        self.beta_ = self.per_beta0
        self.history_ = []
        return self

    # -- acting ------------------------------------------------------------

    def exploration_sigma(self, episode):
        """Noise std (fraction of ``max_step``) for an episode index."""
        return self.expl_sigma0 * self.expl_decay ** episode

    def _policy(self, net, image, aux):
        return net.forward(image, aux) * self.max_step

    def predict(self, state):
        check_is_fitted(self, "actor_")
        return self._policy(self.actor_, state.image, state.aux)[0]

    def select_action(self, state, explore=False, episode=0):
        action = self.predict(state)
        if explore:
            sigma = self.exploration_sigma(episode) * self.max_step
            if sigma > 0:
                action = action + self.rng_.normal(0.0, sigma, size=action.shape)
            action = np.clip(action, -self.max_step, self.max_step)
        return action

    # -- learning ----------------------------------------------------------

    def _critic_aux(self, aux, action):
        return np.concatenate([aux, action / self.max_step], axis=1)

    def compute_targets(self, batch):
        """Clipped double-Q targets with target-policy smoothing and done masking."""
        n = len(batch.reward)
        next_action = self._policy(self.actor_target_, batch.next_image, batch.next_aux)
        if self.policy_noise > 0:
            noise = self.rng_.normal(0.0, self.policy_noise, size=next_action.shape)
            noise = np.clip(noise, -self.noise_clip, self.noise_clip) * self.max_step
            next_action = np.clip(next_action + noise, -self.max_step, self.max_step)
        caux = self._critic_aux(batch.next_aux, next_action)
        q1 = self.critic1_target_.forward(batch.next_image, caux).reshape(n)
        q2 = self.critic2_target_.forward(batch.next_image, caux).reshape(n)
        return batch.reward + self.gamma * (1.0 - batch.done) * np.minimum(q1, q2)

    def _critic_loss(self, pred, target, weights):
        if self.loss == "huber":
            return huber_loss(pred, target, self.huber_delta, weights)
        return mse_loss(pred, target, weights)

    def _update_critic(self, net, opt, batch, target, weights):
        n = len(target)
        caux = self._critic_aux(batch.aux, batch.action)
        q = net.forward(batch.image, caux).reshape(n, 1)
        loss, grad = self._critic_loss(q, target.reshape(n, 1), weights)
        net.backward(grad, input_grad=False)
        opt.step(net.params, net.grads)
        return loss, q.ravel()

    def _update_actor(self, batch):
        n = len(batch.reward)
        act = self.actor_.forward(batch.image, batch.aux)
        q = self.critic1_.forward(batch.image, self._critic_aux(batch.aux, act * self.max_step))
        actor_loss = -float(q.mean())
        _, d_aux = self.critic1_.backward(np.full((n, 1), -1.0 / n), input_grad=False)
        # critic aux ends with action / max_step, which is exactly the tanh output
        self.actor_.backward(d_aux[:, -self.action_dim_ :], input_grad=False)
        self.actor_opt_.step(self.actor_.params, self.actor_.grads)
        return actor_loss

    def train_step(self, buffer=None, batch_size=None):
        """One TD3 iteration on a sampled mini-batch; returns diagnostics."""
        check_is_fitted(self, "actor_")
        buffer = self.buffer_ if buffer is None else buffer
        batch_size = self.batch_size if batch_size is None else batch_size
        batch, weights, indices = buffer.sample(batch_size, self.beta_)
        use_w = weights if self.replay == "per" else None

        target = self.compute_targets(batch)
        self.last_target_ = target
        loss1, q1 = self._update_critic(self.critic1_, self.critic1_opt_, batch, target, use_w)
        loss2, _ = self._update_critic(self.critic2_, self.critic2_opt_, batch, target, use_w)
        self.n_critic_updates_ += 1
        td = target - q1
        buffer.update_priorities(indices, td)

        self.total_it_ += 1
        actor_loss = None
        if self.total_it_ % self.policy_delay == 0:
            actor_loss = self._update_actor(batch)
            self.n_actor_updates_ += 1
            for tgt, src in (
                (self.actor_target_, self.actor_),
                (self.critic1_target_, self.critic1_),
                (self.critic2_target_, self.critic2_),
            ):
                soft_update(tgt.params, src.params, self.tau)
        return {
            "critic1_loss": loss1,
            "critic2_loss": loss2,
            "actor_loss": actor_loss,
            "mean_td_error": float(np.mean(np.abs(td))),
        }

    def fit(self, env, episodes=1, run_id=0, callback=None):
        """Train online for ``episodes`` episodes; per-episode logs go to ``history_``.

        Training starts once the buffer holds one batch and then runs one
        iteration per environment step.
        """
        if env.state_mode != self.state_mode or env.n_frames != self.n_frames:
            raise ValueError(
                f"environment state ({env.state_mode}, {env.n_frames} frames) does not match "
                f"agent ({self.state_mode}, {self.n_frames} frames)"
            )
        if env.config.max_step != self.max_step:
            raise ValueError("environment and agent disagree on max_step")
        if not hasattr(self, "actor_"):
            self.initialize(env.image_shape, env.aux_len)
        start = len(self.history_)
        for ep in range(start, start + episodes):
            self.beta_ = self.per_beta0 + (1.0 - self.per_beta0) * min(1.0, (ep - start) / max(episodes, 1))
            state = env.reset()
            rewards, r1s, r2s, r3s = [], [], [], []
            c1, c2, al = [], [], []
            done = False
            while not done:
                action = self.select_action(state, explore=True, episode=ep)
                nxt, reward, done, info = env.step(action)
                self.buffer_.push(
                    Transition(state.image, state.aux, action, reward, nxt.image, nxt.aux, done)
                )
                rewards.append(reward)
                r1s.append(info["r1"])
                r2s.append(info["r2"])
                r3s.append(info["r3"])
                if len(self.buffer_) >= self.batch_size:
                    diag = self.train_step()
                    c1.append(diag["critic1_loss"])
                    c2.append(diag["critic2_loss"])
                    if diag["actor_loss"] is not None:
                        al.append(diag["actor_loss"])
                state = nxt
            row = {
                "run_id": run_id,
                "episode": ep,
                "mean_step_reward": float(np.mean(rewards)),
                "r1_mean": float(np.mean(r1s)),
                "r2_mean": float(np.mean(r2s)),
                "r3_mean": float(np.mean(r3s)),
                "critic1_loss": float(np.mean(c1)) if c1 else math.nan,
                "critic2_loss": float(np.mean(c2)) if c2 else math.nan,
                "actor_loss": float(np.mean(al)) if al else math.nan,
                "epsilon_sigma": self.exploration_sigma(ep),
            }
            self.history_.append(row)
            if callback is not None:
                callback(row)
        return self


def build_agent(kind, hyper=None, network=None, max_step=50.0, seed=0):
    """Agent for a variant with its preset hyperparameters, then ``hyper`` overrides."""
    kind = normalize_kind(kind)
    params = dict(KIND_PRESETS[kind])
    params.update(hyper or {})
    return TD3Agent(kind=kind, network=network, max_step=max_step, seed=seed, **params)

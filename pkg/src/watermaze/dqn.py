"""Sequence DQN: replay of whole episodes, windowed batches, per-position loss.

Each sampled window is a run of consecutive observations from one episode.
The online network predicts Q-values at every position; the target for
position t bootstraps from the target network evaluated on the same window
shifted one step forward.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autograd as ag
from .autograd import Adam
from .env import Termination
from .model import QTransformer


@dataclass(frozen=True)
class TrainConfig:
    seq_len: int = 45
    batch_size: int = 64
    gamma: float = 0.99
    lr: float = 1e-4
    eps_start: float = 0.95
    eps_end: float = 0.05
    eps_decay_steps: int = 10_000
    target_sync_interval: int = 10_000
    warmup_transitions: int = 1_000
    updates_per_env_step: int = 1
    episodes: int = 3_000
    buffer_capacity: int = 50_000
    clip_norm: float | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise ValueError("need 0 <= eps_end <= eps_start <= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.seq_len < 1:
            raise ValueError("seq_len must be at least 1")
        if self.target_sync_interval < 1 or self.eps_decay_steps < 1:
            raise ValueError("intervals must be positive")
        if self.warmup_transitions < 1:
            raise ValueError("warmup_transitions must be positive")


class Transition(NamedTuple):
    observation: np.ndarray
    action: int
    reward: float
    done: bool


@dataclass
class Episode:
    """One stored episode: T transitions and the T + 1 observations around them.

    ``dones[t]`` marks a true terminal (platform reached). Hitting the step
    limit is a truncation and keeps the bootstrap term.
    """

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray

    def __post_init__(self):
        t = len(self.actions)
        if t == 0:
            raise ValueError("episode must contain at least one transition")
        if len(self.observations) != t + 1 or len(self.rewards) != t or len(self.dones) != t:
            raise ValueError("episode arrays have inconsistent lengths")

    def __len__(self):
        return len(self.actions)

    def transition(self, i):
        return Transition(self.observations[i], int(self.actions[i]), float(self.rewards[i]), bool(self.dones[i]))

    @classmethod
    def from_lists(cls, observations, actions, rewards, dones):
        return cls(
            np.asarray(observations, dtype=np.float64),
            np.asarray(actions, dtype=np.int64),
            np.asarray(rewards, dtype=np.float64),
            np.asarray(dones, dtype=bool),
        )


class ReplayBuffer:
    """FIFO pool of whole episodes, bounded by a transition count."""

    def __init__(self, capacity=50_000):
        self.capacity = capacity
        self.episodes = deque()
        self.total_transitions = 0

    def __len__(self):
        return self.total_transitions

    def push(self, episode):
        if len(episode) > self.capacity:
            raise ValueError(f"episode of {len(episode)} transitions exceeds buffer capacity {self.capacity}")
        self.episodes.append(episode)
        self.total_transitions += len(episode)
        while self.total_transitions > self.capacity:
            self.total_transitions -= len(self.episodes.popleft())


@dataclass
class SampledBatch:
    obs: np.ndarray
    next_obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    valid: np.ndarray


def epsilon(train_step, config):
    if train_step >= config.eps_decay_steps:
        return config.eps_end  # exact, not 0.95 - 0.9 * 1.0
    frac = train_step / config.eps_decay_steps
    return max(config.eps_end, config.eps_start - (config.eps_start - config.eps_end) * frac)


def pad_context(observations, seq_len):
    """Last ``seq_len`` observations, left-padded with zero rows to ``seq_len``.

    Acting sees the same layout as training windows near an episode start.
    """
    obs = np.asarray(observations, dtype=np.float64)[-seq_len:]
    if len(obs) == seq_len:
        return obs
    out = np.zeros((seq_len, obs.shape[1]))
    out[seq_len - len(obs):] = obs
    return out


def select_action(model, context, eps, rng):
    """Epsilon-greedy over the model's greedy action."""
    if rng.random() < eps:
        return int(rng.integers(model.config.num_actions))
    return model.act_greedy(context)


def window(episode, end, seq_len):
    """Window of ``seq_len`` positions whose last transition is ``end``."""
    start = end - seq_len + 1
    pad = max(0, -start)
    s0 = max(0, start)
    dim = episode.observations.shape[1]
    obs = np.zeros((seq_len, dim))
    nxt = np.zeros((seq_len, dim))
    actions = np.zeros(seq_len, dtype=np.int64)
    rewards = np.zeros(seq_len)
    dones = np.zeros(seq_len, dtype=bool)
    valid = np.zeros(seq_len, dtype=bool)
    obs[pad:] = episode.observations[s0:end + 1]
    nxt[pad:] = episode.observations[s0 + 1:end + 2]
    actions[pad:] = episode.actions[s0:end + 1]
    rewards[pad:] = episode.rewards[s0:end + 1]
    dones[pad:] = episode.dones[s0:end + 1]
    valid[pad:] = True
    return obs, nxt, actions, rewards, dones, valid


def sample_batch(buffer, config, rng):
    """Draw ``batch_size`` windows, uniformly over stored transitions.

    A uniform global transition index picks the episode (proportional to its
    length) and the window's last position in one draw.
    """
    if buffer.total_transitions < config.warmup_transitions:
        raise RuntimeError(
            f"buffer holds {buffer.total_transitions} transitions, warmup needs {config.warmup_transitions}"
        )
    episodes = list(buffer.episodes)
    offsets = np.cumsum([len(e) for e in episodes])
    picks = rng.integers(0, buffer.total_transitions, size=config.batch_size)
    which = np.searchsorted(offsets, picks, side="right")
    parts = [
        window(episodes[i], int(g - (offsets[i - 1] if i else 0)), config.seq_len)
        for i, g in zip(which, picks)
    ]
    return SampledBatch(*(np.stack(cols) for cols in zip(*parts)))


def compute_loss(batch, online, target, config, rng=None, training=True):
    """Masked mean over valid positions of the squared Bellman error."""
    count = int(batch.valid.sum())
    if count == 0:
        raise ValueError("batch has no valid positions")
    q = online.forward(batch.obs, training=training, rng=rng)
    pred = ag.take_last(q, batch.actions)
    with ag.no_grad():
        best_next = target.forward(batch.next_obs).data.max(axis=-1)
    targets = batch.rewards + config.gamma * (1.0 - batch.dones) * best_next
    mask = batch.valid.astype(q.data.dtype)
    err = pred - targets.astype(q.data.dtype)
    return ag.tsum(ag.square(err) * mask) * (1.0 / count)


@dataclass
class EpisodeLog:
    episode: int
    steps: int
    total_reward: float
    epsilon: float
    mean_loss: float
    success: bool


class Trainer:
    """Owns the online/target networks, optimizer, replay buffer and RNG streams."""

    def __init__(self, model_config, config):
        self.config = config
        init_seed, policy_seed, sample_seed, dropout_seed = np.random.SeedSequence(config.rng_seed).spawn(4)
        self.online = QTransformer(model_config, seed=np.random.default_rng(init_seed))
        self.target = self.online.copy()
        self.optimizer = Adam(self.online.parameters(), lr=config.lr, clip_norm=config.clip_norm)
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.policy_rng = np.random.default_rng(policy_seed)
        self.sample_rng = np.random.default_rng(sample_seed)
        self.dropout_rng = np.random.default_rng(dropout_seed)
        self.steps = 0

    @property
    def epsilon(self):
        return epsilon(self.steps, self.config)

    def ready(self):
        return self.buffer.total_transitions >= self.config.warmup_transitions

    def train_step(self):
        batch = sample_batch(self.buffer, self.config, self.sample_rng)
        self.optimizer.zero_grad()
        loss = compute_loss(batch, self.online, self.target, self.config, self.dropout_rng)
        loss.backward()
        self.optimizer.step()
        self.steps += 1
        if self.steps % self.config.target_sync_interval == 0:
            self.target.load_state_from(self.online)
        return loss.item()

    def run_episode(self, env, index):
        cfg = self.config
        _, obs = env.reset()
        observations = [obs]
        actions, rewards, dones = [], [], []
        losses = []
        eps = self.epsilon
        result = None
        while not env.done:
            eps = self.epsilon
            action = select_action(self.online, pad_context(observations, cfg.seq_len), eps, self.policy_rng)
            result = env.step(action)
            observations.append(result.observation)
            actions.append(action)
            rewards.append(result.reward)
            dones.append(result.termination is Termination.PLATFORM)
            if self.ready():
                for _ in range(cfg.updates_per_env_step):
                    losses.append(self.train_step())
        self.buffer.push(Episode.from_lists(observations, actions, rewards, dones))
        return EpisodeLog(
            episode=index,
            steps=len(actions),
            total_reward=math.fsum(rewards),
            epsilon=eps,
            mean_loss=float(np.mean(losses)) if losses else float("nan"),
            success=result.termination is Termination.PLATFORM,
        )


def run_training(env, model_config, config, on_episode=None):
    """Train for ``config.episodes`` episodes; returns (episode logs, trainer)."""
    trainer = Trainer(model_config, config)
    log = []
    for i in range(config.episodes):
        entry = trainer.run_episode(env, i)
        log.append(entry)
        if on_episode is not None:
            on_episode(entry)
    return log, trainer

"""PPO training for the one-shot correction policy.

The actor parameterises a squashed Gaussian: a Normal draw in pre-squash
space mapped through 2*sigmoid onto the action range (0, 2).  Episodes are
single-step by default, so the advantage is simply reward minus the critic's
value estimate; updates use the clipped surrogate objective.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .environment import DistortionEnv, EpisodeLogWriter
from .networks import PolicyParams, actor_forward, critic_forward, obs_to_tensor, save_checkpoint

_LOG_2PI = math.log(2.0 * math.pi)
_ACTION_EPS = 1e-12


class NonFiniteLossError(RuntimeError):
    """The PPO loss went non-finite; carries the offending diagnostics."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class PpoConfig:
    clip_ratio: float = 0.2
    update_interval: int = 2000
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3
    explore_eps_start: float = 1.0
    explore_eps_final: float = 0.05
    explore_anneal_episodes: int = 10000
    value_loss_coeff: float = 0.5
    max_episodes: int = 30000

    def __post_init__(self):
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError("clip_ratio must be in (0, 1)")
        if self.batch_size > self.update_interval:
            raise ValueError("batch_size must not exceed update_interval")
        if self.batch_size < 1 or self.update_interval < 1 or self.epochs < 1:
            raise ValueError("batch_size, update_interval and epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.explore_eps_final <= self.explore_eps_start <= 1.0:
            raise ValueError("need 0 <= explore_eps_final <= explore_eps_start <= 1")
        if self.explore_anneal_episodes < 1:
            raise ValueError("explore_anneal_episodes must be >= 1")
        if self.value_loss_coeff < 0:
            raise ValueError("value_loss_coeff must be >= 0")
        if self.max_episodes < 0:
            raise ValueError("max_episodes must be >= 0")


def explore_epsilon(cfg: PpoConfig, episode: int) -> float:
    """Linear anneal from start to final, constant after the anneal horizon."""
    if episode >= cfg.explore_anneal_episodes:
        return cfg.explore_eps_final
    frac = max(episode, 0) / cfg.explore_anneal_episodes
    return cfg.explore_eps_start + (cfg.explore_eps_final - cfg.explore_eps_start) * frac


def squash(raw: float) -> float:
    """Map pre-squash space onto the action range: 2*sigmoid(raw)."""
    return 2.0 / (1.0 + math.exp(-raw))


def squashed_log_prob(action: float, mean: float, std: float) -> float:
    """Log density of `action` under the squashed Gaussian policy.

    Includes the change-of-variables correction for the 2*sigmoid squash;
    the action is nudged off the exact endpoints to keep the logs finite.
    """
    a = min(max(action, _ACTION_EPS), 2.0 - _ACTION_EPS)
    raw = math.log(a) - math.log(2.0 - a)
    z = (raw - mean) / std
    log_pdf = -0.5 * z * z - math.log(std) - 0.5 * _LOG_2PI
    log_jacobian = math.log(a * (2.0 - a) / 2.0)
    return log_pdf - log_jacobian


def sample_action(
    params: PolicyParams,
    obs: np.ndarray,
    explore_eps: float,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Draw an action in [0, 2] and its log probability under the policy.

    With probability `explore_eps` the action is uniform on [0, 2]; its
    log probability is still evaluated under the policy density, which is
    what the PPO ratio uses later.
    """
    if not 0.0 <= explore_eps <= 1.0:
        raise ValueError("explore_eps must be in [0, 1]")
    mean_raw, log_std = actor_forward(params, obs)
    std = math.exp(log_std)
    if rng.random() < explore_eps:
        action = float(rng.uniform(0.0, 2.0))
    else:
        action = squash(mean_raw + std * float(rng.standard_normal()))
    return action, squashed_log_prob(action, mean_raw, std)


def policy_action(params: PolicyParams, obs: np.ndarray) -> float:
    """Deterministic action: the squashed policy mean, no exploration."""
    mean_raw, _ = actor_forward(params, obs)
    return squash(mean_raw)


class TrajectoryBuffer:
    """Fixed-capacity store of (obs, action, log_prob, reward, value) rows."""

    def __init__(self, capacity: int, obs_shape: tuple[int, ...]):
        self.capacity = capacity
        self.obs = np.zeros((capacity, *obs_shape), dtype=np.float32)
        self.actions = np.zeros(capacity, dtype=np.float64)
        self.log_probs = np.zeros(capacity, dtype=np.float64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.values = np.zeros(capacity, dtype=np.float64)
        self.size = 0

    @property
    def full(self) -> bool:
        return self.size >= self.capacity

    def add(self, obs, action, log_prob, reward, value) -> None:
        if self.full:
            raise RuntimeError("trajectory buffer is full")
        i = self.size
        self.obs[i] = obs
        self.actions[i] = action
        self.log_probs[i] = log_prob
        self.rewards[i] = reward
        self.values[i] = value
        self.size += 1

    def clear(self) -> None:
        self.size = 0


def ppo_loss(
    params: PolicyParams,
    obs: torch.Tensor,
    actions: torch.Tensor,
    old_log_probs: torch.Tensor,
    rewards: torch.Tensor,
    advantages: torch.Tensor,
    cfg: PpoConfig,
) -> tuple[torch.Tensor, dict]:
    """Clipped-surrogate policy loss plus weighted value regression loss."""
    mean_raw = params.actor(obs).reshape(-1)
    log_std = params.actor.log_std.to(obs.dtype)
    std = torch.exp(log_std)

    a = actions.clamp(_ACTION_EPS, 2.0 - _ACTION_EPS)
    raw = torch.log(a) - torch.log(2.0 - a)
    z = (raw - mean_raw) / std
    log_probs = -0.5 * z * z - log_std - 0.5 * _LOG_2PI - torch.log(a * (2.0 - a) / 2.0)

    ratio = torch.exp(log_probs - old_log_probs)
    unclipped = ratio * advantages
    clipped = torch.clamp(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio) * advantages
    policy_loss = -torch.minimum(unclipped, clipped).mean()

    values = params.critic(obs).reshape(-1)
    value_loss = ((rewards - values) ** 2).mean()

    loss = policy_loss + cfg.value_loss_coeff * value_loss
    with torch.no_grad():
        clip_fraction = (
            ((ratio < 1.0 - cfg.clip_ratio) | (ratio > 1.0 + cfg.clip_ratio))
            .to(obs.dtype)
            .mean()
        )
    stats = {
        "policy_loss": float(policy_loss.detach()),
        "value_loss": float(value_loss.detach()),
        "clip_fraction": float(clip_fraction),
    }
    return loss, stats


def ppo_update(
    params: PolicyParams,
    buffer: TrajectoryBuffer,
    cfg: PpoConfig,
    rng: np.random.Generator,
    optimizer: torch.optim.Optimizer | None = None,
) -> dict:
    """Run the configured epochs of minibatch updates over one trajectory.

    Single-step episodes make the advantage reward - value.  Returns mean
    diagnostics over the final epoch; raises NonFiniteLossError (before
    stepping) if the loss degenerates.
    """
    if optimizer is None:
        optimizer = torch.optim.Adam(params.parameters(), lr=cfg.learning_rate)
    n = buffer.size
    obs = obs_to_tensor(buffer.obs[:n])
    actions = torch.from_numpy(buffer.actions[:n]).to(torch.float32)
    old_log_probs = torch.from_numpy(buffer.log_probs[:n]).to(torch.float32)
    rewards = torch.from_numpy(buffer.rewards[:n]).to(torch.float32)
    advantages = torch.from_numpy(buffer.rewards[:n] - buffer.values[:n]).to(torch.float32)

    diagnostics = {"policy_loss": 0.0, "value_loss": 0.0, "clip_fraction": 0.0}
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        batch_stats = []
        for start in range(0, n, cfg.batch_size):
            idx = torch.from_numpy(order[start : start + cfg.batch_size].copy())
            loss, stats = ppo_loss(
                params,
                obs[idx],
                actions[idx],
                old_log_probs[idx],
                rewards[idx],
                advantages[idx],
                cfg,
            )
            if not torch.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite PPO loss in epoch {epoch}", dict(stats, epoch=epoch)
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            params.actor.clamp_log_std()
            batch_stats.append(stats)
        diagnostics = {
            key: float(np.mean([s[key] for s in batch_stats])) for key in diagnostics
        }
    if not params.all_finite():
        raise NonFiniteLossError("non-finite parameters after update", diagnostics)
    return diagnostics


def moving_average(values, window: int = 30) -> float:
    tail = values[-window:]
    return float(sum(tail) / len(tail))


def write_curve_csv(curve: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["episode", "reward", "moving_avg_30", "explore_eps"]
        )
        writer.writeheader()
        writer.writerows(curve)


def read_curve_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = []
        for row in csv.DictReader(fh):
            rows.append(
                {
                    "episode": int(row["episode"]),
                    "reward": float(row["reward"]),
                    "moving_avg_30": float(row["moving_avg_30"]),
                    "explore_eps": float(row["explore_eps"]),
                }
            )
        return rows


def train(
    env: DistortionEnv,
    cfg: PpoConfig,
    rng: np.random.Generator,
    params: PolicyParams | None = None,
    out_dir=None,
    checkpoint_interval: int = 5000,
    episode_log: EpisodeLogWriter | None = None,
) -> tuple[PolicyParams, list[dict]]:
    """Run the episode loop; returns the trained policy and its learning curve.

    With `out_dir` set, writes `curve.csv`, periodic checkpoints, and a
    final `policy_final.orl`.  Fully reproducible for a fixed rng state
    (single-threaded).
    """
    if params is None:
        params = PolicyParams.init(seed=int(rng.integers(2**31)))
    optimizer = torch.optim.Adam(params.parameters(), lr=cfg.learning_rate)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    buffer: TrajectoryBuffer | None = None
    curve: list[dict] = []
    returns: list[float] = []

    for episode in range(cfg.max_episodes):
        eps = explore_epsilon(cfg, episode)
        obs = env.reset()
        if buffer is None:
            buffer = TrajectoryBuffer(cfg.update_interval, obs.shape)
        episode_return = 0.0
        done = False
        while not done:
            value = critic_forward(params, obs)
            action, log_prob = sample_action(params, obs, eps, rng)
            record, done = env.step(action)
            buffer.add(obs, action, log_prob, record.reward, value)
            episode_return += record.reward
            if episode_log is not None:
                episode_log.write(record)
            if buffer.full:
                ppo_update(params, buffer, cfg, rng, optimizer)
                buffer.clear()
            if not done:
                obs = env.observe()
        returns.append(episode_return)
        curve.append(
            {
                "episode": episode,
                "reward": episode_return,
                "moving_avg_30": moving_average(returns),
                "explore_eps": eps,
            }
        )
        if out_dir is not None and checkpoint_interval > 0:
            if (episode + 1) % checkpoint_interval == 0:
                save_checkpoint(params, out_dir / f"policy_ep{episode + 1:06d}.orl")

    if out_dir is not None:
        write_curve_csv(curve, out_dir / "curve.csv")
        save_checkpoint(params, out_dir / "policy_final.orl")
    return params, curve

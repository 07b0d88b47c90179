"""Trajectory containers and episode collection.

Episodes have a fixed horizon, so a batch of N episodes is stored as stacked
arrays; :class:`Trajectory` and :class:`Transition` are views for code that
wants one episode or one step at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import env as envlib
from .env import EnvConfig
from .nn import GaussianPolicy


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    goal: np.ndarray
    action: np.ndarray
    next_state: np.ndarray
    achieved_next: np.ndarray
    log_prob_behavior: float
    reward: int


@dataclass
class TrajectoryBatch:
    """N fixed-horizon episodes.

    observations  (N, T+1, obs_dim)   s_0 .. s_T
    goals         (N, T, 3)           goal attached to each step
    actions       (N, T, 4)
    achieved      (N, T+1, 3)         achieved goal of every state
    log_probs     (N, T)              behavior log-probability of each action
    env_rewards   (N, T)              sparse environment reward
    """

    observations: np.ndarray
    goals: np.ndarray
    actions: np.ndarray
    achieved: np.ndarray
    log_probs: np.ndarray
    env_rewards: np.ndarray
    task: str = "reach"
    policy_version: int = 0

    def __post_init__(self):
        n, t = self.actions.shape[:2]
        if n == 0:
            raise ValueError("a trajectory batch needs at least one episode")
        if self.observations.shape[:2] != (n, t + 1) or self.achieved.shape[:2] != (n, t + 1):
            raise ValueError("observations/achieved must hold T+1 states per episode")
        if self.goals.shape[:2] != (n, t) or self.log_probs.shape != (n, t) or self.env_rewards.shape != (n, t):
            raise ValueError("per-step arrays must have shape (N, T)")

    @property
    def n_episodes(self) -> int:
        return self.actions.shape[0]

    @property
    def horizon(self) -> int:
        return self.actions.shape[1]

    @property
    def episode_returns(self) -> np.ndarray:
        return self.env_rewards.sum(axis=1)

    def __len__(self) -> int:
        return self.n_episodes

    def __getitem__(self, i) -> "Trajectory":
        return Trajectory(self, i)

    @property
    def trajectories(self) -> list["Trajectory"]:
        return [Trajectory(self, i) for i in range(self.n_episodes)]

    def with_goals(self, goals: np.ndarray) -> "TrajectoryBatch":
        """Same states and actions with the per-step goals replaced."""
        return replace(self, goals=np.asarray(goals, dtype=np.float64))

    def subset(self, index) -> "TrajectoryBatch":
        index = np.atleast_1d(index)
        return TrajectoryBatch(
            self.observations[index], self.goals[index], self.actions[index], self.achieved[index],
            self.log_probs[index], self.env_rewards[index], self.task, self.policy_version,
        )

    def state_goal(self) -> np.ndarray:
        """(N, T, obs_dim + 3) concatenation of s_t and the step's goal."""
        return np.concatenate([self.observations[:, :-1], self.goals], axis=-1)

    def to_arrays(self) -> dict:
        return {
            "observations": self.observations, "goals": self.goals, "actions": self.actions,
            "achieved": self.achieved, "log_probs": self.log_probs, "env_rewards": self.env_rewards,
            "policy_version": np.array([self.policy_version], dtype=np.float64),
        }

    @classmethod
    def from_arrays(cls, arrays: dict, task: str) -> "TrajectoryBatch":
        return cls(
            arrays["observations"], arrays["goals"], arrays["actions"], arrays["achieved"],
            arrays["log_probs"], arrays["env_rewards"].astype(np.int64), task,
            int(arrays["policy_version"][0]),
        )

    @staticmethod
    def concatenate(batches) -> "TrajectoryBatch":
        batches = list(batches)
        cat = lambda name: np.concatenate([getattr(b, name) for b in batches])  # noqa: E731
        return TrajectoryBatch(
            cat("observations"), cat("goals"), cat("actions"), cat("achieved"), cat("log_probs"),
            cat("env_rewards"), batches[0].task, batches[-1].policy_version,
        )


class Trajectory:
    """View of one episode inside a :class:`TrajectoryBatch`."""

    def __init__(self, batch: TrajectoryBatch, index: int):
        self.batch = batch
        self.index = index

    def __len__(self) -> int:
        return self.batch.horizon

    @property
    def observations(self) -> np.ndarray:
        return self.batch.observations[self.index]

    @property
    def goals(self) -> np.ndarray:
        return self.batch.goals[self.index]

    @property
    def actions(self) -> np.ndarray:
        return self.batch.actions[self.index]

    @property
    def achieved(self) -> np.ndarray:
        return self.batch.achieved[self.index]

    @property
    def log_probs(self) -> np.ndarray:
        return self.batch.log_probs[self.index]

    @property
    def env_rewards(self) -> np.ndarray:
        return self.batch.env_rewards[self.index]

    @property
    def episode_return(self) -> float:
        return float(self.env_rewards.sum())

    def transition(self, t: int) -> Transition:
        return Transition(
            self.observations[t], self.goals[t], self.actions[t], self.observations[t + 1],
            self.achieved[t + 1], float(self.log_probs[t]), int(self.env_rewards[t]),
        )

    @property
    def transitions(self) -> list[Transition]:
        return [self.transition(t) for t in range(len(self))]

    def as_batch(self) -> TrajectoryBatch:
        return self.batch.subset(self.index)


def run_episodes(act_fn, env_config: EnvConfig, n_episodes: int, rng: np.random.Generator):
    """Roll out ``act_fn(state_goal) -> (actions, log_probs)`` on fresh episodes."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    horizon = env_config.horizon
    obs0, goal = envlib.reset_batch(env_config, rng, n_episodes)
    obs = np.empty((n_episodes, horizon + 1, env_config.obs_dim))
    actions = np.empty((n_episodes, horizon, envlib.ACTION_DIM))
    logp = np.empty((n_episodes, horizon))
    rewards = np.empty((n_episodes, horizon), dtype=np.int64)
    obs[:, 0] = obs0
    sg = np.empty((n_episodes, env_config.obs_dim + envlib.GOAL_DIM))
    sg[:, env_config.obs_dim:] = goal
    for t in range(horizon):
        sg[:, : env_config.obs_dim] = obs[:, t]
        a, lp = act_fn(sg)
        actions[:, t] = a
        logp[:, t] = lp
        obs[:, t + 1], rewards[:, t] = envlib.step_batch(obs[:, t], goal, a, env_config)
    goals = np.broadcast_to(goal[:, None, :], (n_episodes, horizon, 3)).copy()
    achieved = envlib.achieved_goal_batch(obs, env_config.task).copy()
    return TrajectoryBatch(obs, goals, actions, achieved, logp, rewards, env_config.task)


def collect(policy: GaussianPolicy, env_config, n_episodes: int, rng: np.random.Generator,
            policy_version: int = 0) -> TrajectoryBatch:
    """Sample ``n_episodes`` episodes with actions drawn from the policy."""
    batch = run_episodes(lambda sg: policy.sample(sg, rng), env_config, n_episodes, rng)
    batch.policy_version = policy_version
    return batch


def collect_deterministic(policy: GaussianPolicy, env_config, n_episodes: int, rng) -> TrajectoryBatch:
    """Episodes driven by the policy mean; used for evaluation only."""
    def act(sg):
        mu = policy.mean(sg)
        return mu, np.zeros(len(sg))
    return run_episodes(act, env_config, n_episodes, rng)


def collect_expert(env_config, n_episodes: int, rng, action_std=0.0, max_rounds: int = 100) -> TrajectoryBatch:
    """``n_episodes`` successful episodes of the scripted controller.

    ``action_std`` adds the Gaussian action noise of a fixed-covariance
    policy, which puts the demonstrations inside the policy class. Episodes
    that do not end in success are discarded.
    """
    std = np.asarray(action_std, dtype=np.float64)

    def act(sg):
        obs, goal = sg[:, : env_config.obs_dim], sg[:, env_config.obs_dim:]
        a = envlib.scripted_expert_batch(obs, goal, env_config)
        if np.any(std > 0):
            a = a + std * rng.standard_normal(a.shape)
        return a, np.zeros(len(sg))

    kept, have = [], 0
    for _ in range(max_rounds):
        batch = run_episodes(act, env_config, n_episodes, rng)
        ok = np.flatnonzero(batch.env_rewards[:, -1] == 0)[: n_episodes - have]
        if len(ok):
            kept.append(batch.subset(ok))
            have += len(ok)
        if have == n_episodes:
            return TrajectoryBatch.concatenate(kept)
    raise RuntimeError(f"scripted controller succeeded in only {have} of {max_rounds * n_episodes} episodes")


def to_feature_pairs(batch: TrajectoryBatch) -> tuple[np.ndarray, np.ndarray]:
    """Flatten to (state||goal, action) rows; row i*T + t is episode i, step t."""
    sg = batch.state_goal()
    n, t, d = sg.shape
    return sg.reshape(n * t, d), batch.actions.reshape(n * t, -1)


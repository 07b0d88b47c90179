"""Hindsight goal relabeling of rolled-out trajectories.

Each step of an episode is picked for relabeling with probability ``p_ht``.
A picked step ``j`` gets a new goal: the achieved position of state ``l``,
where ``l`` is uniform over ``{j, ..., T}`` ("future") or ``l = T`` ("final").
States ``s_0..s_T`` are indexed as in the batch arrays, so ``l = T`` is the
terminal state reached by the last transition. Only goals change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rollout import Trajectory, TrajectoryBatch

STRATEGIES = ("future", "final")


@dataclass(frozen=True)
class HindsightConfig:
    strategy: str = "future"
    p_ht: float = 1.0
    curriculum: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown hindsight strategy {self.strategy!r}")
        if not 0.0 <= self.p_ht <= 1.0:
            raise ValueError(f"p_ht must lie in [0, 1], got {self.p_ht}")


@dataclass
class RelabeledTrajectory:
    """A source episode with some per-step goals replaced.

    ``source_steps[t]`` is the state index whose achieved position became the
    goal of step t, or -1 where the goal was kept.
    """

    trajectory: Trajectory
    goals: np.ndarray
    source_index: int
    source_steps: np.ndarray

    @property
    def relabeled_steps(self) -> set[int]:
        return set(np.flatnonzero(self.source_steps >= 0).tolist())

    @property
    def observations(self) -> np.ndarray:
        return self.trajectory.observations

    @property
    def actions(self) -> np.ndarray:
        return self.trajectory.actions

    def __len__(self) -> int:
        return len(self.trajectory)


def relabel_arrays(batch: TrajectoryBatch, config: HindsightConfig, rng: np.random.Generator):
    """Vectorized relabeling of a whole batch.

    Returns the new goals (N, T, 3) and the source state index per step
    (N, T), -1 where a step was not picked.
    """
    n, horizon = batch.n_episodes, batch.horizon
    picked = rng.random((n, horizon)) < config.p_ht
    steps = np.broadcast_to(np.arange(horizon), (n, horizon))
    if config.strategy == "future":
        source = rng.integers(steps, horizon + 1)
    else:
        source = np.full((n, horizon), horizon)
    source = np.where(picked, source, -1)
    rows = np.broadcast_to(np.arange(n)[:, None], (n, horizon))
    new_goals = np.where(picked[..., None], batch.achieved[rows, np.maximum(source, 0)], batch.goals)
    return new_goals, source


def relabel_batch(batch: TrajectoryBatch, config: HindsightConfig, rng) -> list[RelabeledTrajectory]:
    goals, source = relabel_arrays(batch, config, rng)
    return [RelabeledTrajectory(batch[i], goals[i], i, source[i]) for i in range(batch.n_episodes)]


def relabel_trajectory(traj: Trajectory, config: HindsightConfig, rng) -> RelabeledTrajectory:
    single = traj.as_batch()
    goals, source = relabel_arrays(single, config, rng)
    return RelabeledTrajectory(traj, goals[0], traj.index, source[0])


def relabeled_to_batch(relabeled: list[RelabeledTrajectory]) -> TrajectoryBatch:
    """Stack relabeled episodes back into a batch carrying the new goals."""
    if not relabeled:
        raise ValueError("nothing to stack")
    base = TrajectoryBatch.concatenate(r.trajectory.as_batch() for r in relabeled)
    return base.with_goals(np.stack([r.goals for r in relabeled]))


def relabel(batch: TrajectoryBatch, config: HindsightConfig, rng) -> TrajectoryBatch:
    """Relabeled copy of ``batch`` (the form the trainer consumes)."""
    goals, _ = relabel_arrays(batch, config, rng)
    return batch.with_goals(goals)


class FrozenSource:
    """Positive-sample provider backed by the iteration-zero relabeled set.

    Used when the curriculum is switched off: every discriminator phase draws
    its positives from the same frozen episodes.
    """

    def __init__(self, initial: TrajectoryBatch | list):
        if isinstance(initial, list):
            if not initial:
                raise ValueError("frozen source needs at least one relabeled trajectory")
            initial = relabeled_to_batch(initial)
        self.batch = initial
        sg = initial.state_goal()
        self.features = sg.reshape(-1, sg.shape[-1])
        self.actions = initial.actions.reshape(-1, initial.actions.shape[-1])

    def __len__(self) -> int:
        return len(self.features)

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        return self.features, self.actions

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        idx = rng.integers(0, len(self.features), size=n)
        return self.features[idx], self.actions[idx], idx


def frozen_source(initial_relabeled) -> FrozenSource:
    return FrozenSource(initial_relabeled)

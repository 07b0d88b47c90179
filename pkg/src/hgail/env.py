"""Analytic goal-conditioned point-mass environments.

Two tasks share one interface:

* ``reach``: move the gripper to a target position.
* ``grasp``: move to an object resting on the floor, close the gripper on it
  and carry it to a target above it.

State is an explicit flat observation vector, so ``step`` is a pure function.
Layout: ``[gripper_pos(3), gripper_vel(3)]`` for reach and
``[gripper_pos(3), gripper_vel(3), object_pos(3), aperture(1)]`` for grasp.

Actions are 4-vectors in normalized units. The first three entries are
clipped to [-1, 1] and multiplied by ``max_step`` to give the displacement in
meters; the fourth commands the gripper (``< 0`` closes, ``>= 0`` opens) and
is ignored on reach.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from . import kernels

ACTION_DIM = 4
GOAL_DIM = 3
TASKS = ("reach", "grasp")


@dataclass(frozen=True)
class EnvConfig:
    task: str = "reach"
    low: tuple = (0.0, 0.0, 0.0)
    high: tuple = (0.3, 0.3, 0.3)
    max_step: float = 0.015
    horizon: int = 50
    success_radius: float = 0.05
    damping: float = 0.0
    dt: float = 0.04
    grasp_radius: float = 0.03
    lift_height: float = 0.1

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        low, high = np.asarray(self.low, float), np.asarray(self.high, float)
        if low.shape != (3,) or high.shape != (3,):
            raise ValueError("workspace bounds must be 3-vectors")
        if not np.all(high > low):
            raise ValueError(f"degenerate workspace: low={self.low} high={self.high}")
        if self.success_radius <= 0:
            raise ValueError("success_radius must be positive")
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if self.task == "grasp" and self.lift_height >= high[2] - low[2]:
            raise ValueError("lift_height does not fit inside the workspace")

    @classmethod
    def default(cls, task: str = "reach") -> "EnvConfig":
        if task == "grasp":
            return cls(task="grasp", low=(0.0, 0.0, 0.0), high=(0.3, 0.3, 0.2))
        return cls(task=task)

    @property
    def obs_dim(self) -> int:
        return 6 if self.task == "reach" else 10

    @functools.cached_property
    def low_arr(self) -> np.ndarray:
        return np.asarray(self.low, dtype=np.float64)

    @functools.cached_property
    def high_arr(self) -> np.ndarray:
        return np.asarray(self.high, dtype=np.float64)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.low_arr + self.high_arr)


@dataclass
class GoalObservation:
    gripper_position: np.ndarray
    gripper_velocity: np.ndarray
    object_position: np.ndarray | None = None
    gripper_aperture: float | None = None

    def vector(self) -> np.ndarray:
        parts = [self.gripper_position, self.gripper_velocity]
        if self.object_position is not None:
            parts += [self.object_position, [self.gripper_aperture]]
        return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])

    @classmethod
    def from_vector(cls, vec) -> "GoalObservation":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape == (6,):
            return cls(vec[0:3].copy(), vec[3:6].copy())
        if vec.shape == (10,):
            return cls(vec[0:3].copy(), vec[3:6].copy(), vec[6:9].copy(), float(vec[9]))
        raise ValueError(f"observation vector of shape {vec.shape} matches no task")


@dataclass
class Goal:
    target_position: np.ndarray = field(default_factory=lambda: np.zeros(3))


def feature_scaling(config: EnvConfig) -> tuple[np.ndarray, np.ndarray]:
    """Shift and scale that map state||goal features to roughly [-1, 1].

    Positions are centered on the workspace and divided by its half-extent,
    velocities by the largest per-step speed, the aperture from [0, 1].
    """
    center, half = config.center, 0.5 * (config.high_arr - config.low_arr)
    speed = config.max_step / config.dt
    shift = [center, np.zeros(3)]
    scale = [1.0 / half, np.full(3, 1.0 / speed)]
    if config.task == "grasp":
        shift += [center, [0.5]]
        scale += [1.0 / half, [2.0]]
    shift.append(center)
    scale.append(1.0 / half)
    return np.concatenate(shift), np.concatenate(scale)


def reset_batch(config: EnvConfig, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Reset ``n`` episodes. Returns observations (n, obs_dim) and goals (n, 3)."""
    low, high = config.low_arr, config.high_arr
    obs = np.zeros((n, config.obs_dim))
    obs[:, 0:3] = config.center
    if config.task == "reach":
        goals = rng.uniform(low, high, size=(n, 3))
    else:
        margin = np.array([config.grasp_radius, config.grasp_radius, 0.0])
        obj = rng.uniform(low + margin, high - margin, size=(n, 3))
        obj[:, 2] = low[2]
        goals = obj.copy()
        goals[:, 2] = low[2] + config.lift_height
        obs[:, 6:9] = obj
        obs[:, 9] = 1.0
    return obs, goals


def reset(config: EnvConfig, rng: np.random.Generator) -> tuple[GoalObservation, Goal]:
    obs, goals = reset_batch(config, rng, 1)
    return GoalObservation.from_vector(obs[0]), Goal(goals[0])


def achieved_goal_batch(obs: np.ndarray, task: str) -> np.ndarray:
    if task == "reach":
        return obs[..., 0:3]
    if obs.shape[-1] != 10:
        raise ValueError("grasp observations must carry the object position")
    return obs[..., 6:9]


def achieved_goal(state, task: str) -> np.ndarray:
    """Position that counts as "achieved": gripper for reach, object for grasp."""
    if isinstance(state, GoalObservation):
        if task == "reach":
            return np.asarray(state.gripper_position, dtype=np.float64)
        if state.object_position is None:
            raise ValueError("grasp state has no object position")
        return np.asarray(state.object_position, dtype=np.float64)
    return np.array(achieved_goal_batch(np.asarray(state, dtype=np.float64), task))


def holding(obs: np.ndarray, config: EnvConfig) -> np.ndarray:
    """Grasp predicate: gripper closed and within grasp radius of the object."""
    closed = obs[..., 9] < 0.5
    dist = np.linalg.norm(obs[..., 0:3] - obs[..., 6:9], axis=-1)
    return closed & (dist <= config.grasp_radius)


def is_success(obs: np.ndarray, goals: np.ndarray, config: EnvConfig) -> np.ndarray:
    dist = np.linalg.norm(achieved_goal_batch(obs, config.task) - goals, axis=-1)
    ok = dist <= config.success_radius
    if config.task == "grasp":
        ok &= holding(obs, config)
    return ok


def step_batch(obs, goals, actions, config: EnvConfig) -> tuple[np.ndarray, np.ndarray]:
    """Advance a batch of states by one step. Returns (next_obs, rewards)."""
    obs = np.ascontiguousarray(obs, dtype=np.float64)
    goals = np.ascontiguousarray(goals, dtype=np.float64)
    actions = np.ascontiguousarray(actions, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[1] != config.obs_dim or actions.shape != (len(obs), ACTION_DIM):
        raise ValueError(f"expected obs (n, {config.obs_dim}) and actions (n, {ACTION_DIM}), "
                         f"got {obs.shape} and {actions.shape}")
    return kernels.point_mass_step(obs, goals, actions, config.low_arr, config.high_arr, config.max_step,
                                   config.dt, config.damping, config.task == "grasp", config.grasp_radius,
                                   config.success_radius)


def step(state, goal, action, config: EnvConfig) -> tuple[GoalObservation, int]:
    vec = state.vector() if isinstance(state, GoalObservation) else np.asarray(state, dtype=np.float64)
    target = goal.target_position if isinstance(goal, Goal) else goal
    nxt, rew = step_batch(vec[None, :], np.asarray(target, dtype=np.float64)[None, :],
                          np.asarray(action, dtype=np.float64)[None, :], config)
    return GoalObservation.from_vector(nxt[0]), int(rew[0])


def _toward(delta: np.ndarray, max_step: float) -> np.ndarray:
    """Normalized command moving by ``delta``, saturated at one full step in norm."""
    cmd = delta / max_step
    norm = np.linalg.norm(cmd, axis=-1, keepdims=True)
    return cmd / np.maximum(norm, 1.0)


def scripted_expert_batch(obs, goals, config: EnvConfig) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    goals = np.asarray(goals, dtype=np.float64)
    act = np.zeros((obs.shape[0], ACTION_DIM))
    pos = obs[:, 0:3]
    if config.task == "reach":
        act[:, 0:3] = _toward(goals - pos, config.max_step)
        return act
    obj = obs[:, 6:9]
    near = np.linalg.norm(pos - obj, axis=1) <= config.grasp_radius
    # carry: move the gripper so the object lands on the goal
    carry = _toward(goals - obj, config.max_step)
    approach = _toward(obj - pos, config.max_step)
    act[:, 0:3] = np.where(near[:, None], carry, approach)
    act[:, 3] = np.where(near, -1.0, 1.0)
    return act


def scripted_expert(state, goal, config: EnvConfig) -> np.ndarray:
    """Saturated proportional controller used to produce demonstrations."""
    vec = state.vector() if isinstance(state, GoalObservation) else np.asarray(state, dtype=np.float64)
    target = goal.target_position if isinstance(goal, Goal) else goal
    return scripted_expert_batch(vec[None, :], np.asarray(target, dtype=np.float64)[None, :], config)[0]


def displacement(action, config: EnvConfig) -> np.ndarray:
    """Displacement in meters that ``action`` commands before workspace clipping."""
    return config.max_step * np.clip(np.asarray(action, dtype=np.float64)[..., 0:3], -1.0, 1.0)

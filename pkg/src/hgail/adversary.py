"""Discriminator loss and the score-to-reward mappings.

Class convention: the discriminator output ``x`` is a logit and
``D = sigmoid(x)`` is the probability that a pair came from the *policy*.
The loss therefore pushes D toward 1 on rollouts and toward 0 on the
hindsight (expert-like) pairs, and the policy is trained to make D small.

Reward formations r1..r4 are written for a score where larger means "more
expert-like". :data:`REWARD_SCORE_SIGN` converts the discriminator logit into
that score, so under the default orientation ``r1 = -log D``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import InputScaler, MlpParams, backward, forward

FORMATIONS = ("r1", "r2", "r3", "r4")
SEMANTICS = ("raw_logit", "probability")
PROB_EPS = 1e-7
ACTION_LIMIT = 1.0

# -1: D is the policy-class probability, so expert-likeness is -logit.
# Flip to +1 to recover the original GAIL orientation.
REWARD_SCORE_SIGN = -1.0


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -x))


def softplus(x):
    return np.logaddexp(0.0, x)


@dataclass
class Discriminator:
    net: MlpParams
    obs_dim: int
    goal_dim: int = 3
    action_dim: int = 4
    scaler: InputScaler | None = None

    def __post_init__(self):
        if self.net.input_dim != self.obs_dim + self.goal_dim + self.action_dim:
            raise ValueError("discriminator input size must be obs + goal + action dims")
        if self.net.output_dim != 1:
            raise ValueError("discriminator must output a single score")
        if self.scaler is not None and self.scaler.shift.shape != (self.obs_dim + self.goal_dim,):
            raise ValueError("scaler must cover the state and goal features")

    @classmethod
    def init(cls, obs_dim: int, rng, hidden=(100, 100), goal_dim=3, action_dim=4,
             scaler: InputScaler | None = None) -> "Discriminator":
        net = MlpParams.init([obs_dim + goal_dim + action_dim, *hidden, 1], rng)
        return cls(net, obs_dim, goal_dim, action_dim, scaler)

    def copy(self) -> "Discriminator":
        return Discriminator(self.net.copy(), self.obs_dim, self.goal_dim, self.action_dim, self.scaler)


@dataclass(frozen=True)
class RewardFormation:
    kind: str = "r1"
    score_semantics: str = "raw_logit"

    def __post_init__(self):
        if self.kind not in FORMATIONS:
            raise ValueError(f"unknown reward formation {self.kind!r}")
        if self.score_semantics not in SEMANTICS:
            raise ValueError(f"unknown score semantics {self.score_semantics!r}")


def _inputs(disc: Discriminator, state_goal, action) -> np.ndarray:
    state_goal = np.asarray(state_goal, dtype=np.float64)
    if disc.scaler is not None:
        state_goal = disc.scaler(state_goal)
    # the environment clips commands to [-1, 1]; score what is executed
    executed = np.clip(np.asarray(action, dtype=np.float64), -ACTION_LIMIT, ACTION_LIMIT)
    return np.concatenate([state_goal, executed], axis=-1)


def disc_score(disc: Discriminator, state_goal, action):
    """Raw logit for one pair or a batch of pairs."""
    out, _ = forward(disc.net, _inputs(disc, state_goal, action))
    return out[..., 0] if np.ndim(out) > 1 else float(out[0])


def disc_probability(disc: Discriminator, state_goal, action):
    return sigmoid(disc_score(disc, state_goal, action))


def disc_inputs(disc: Discriminator, state_goal, action) -> np.ndarray:
    """Network input rows for (state||goal, action) pairs: scaled, actions clipped."""
    return _inputs(disc, state_goal, action)


def disc_loss_and_grad_rows(disc: Discriminator, gen_rows: np.ndarray, exp_rows: np.ndarray):
    """:func:`disc_loss_and_grad` on rows already built by :func:`disc_inputs`."""
    n_gen, n_exp = len(gen_rows), len(exp_rows)
    if n_gen == 0 or n_exp == 0:
        raise ValueError("both sample sets must be non-empty")
    x, cache = forward(disc.net, np.concatenate([gen_rows, exp_rows]))
    p = sigmoid(x[:, 0])
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    inside = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
    loss = -float(np.log(pc[:n_gen]).sum()) / n_gen - float(np.log1p(-pc[n_gen:]).sum()) / n_exp
    dx = np.empty_like(p)
    dx[:n_gen] = -(1.0 - p[:n_gen]) / n_gen
    dx[n_gen:] = p[n_gen:] / n_exp
    dx *= inside
    grad, _ = backward(disc.net, cache, dx[:, None])
    return float(loss), grad


def disc_loss_and_grad(disc: Discriminator, generator_pairs, expert_like_pairs):
    """Cross-entropy -mean_gen log D - mean_exp log(1 - D) and its exact gradient.

    Each pair argument is ``(state_goal, actions)`` as 2-D arrays.
    """
    return disc_loss_and_grad_rows(disc, _inputs(disc, *generator_pairs), _inputs(disc, *expert_like_pairs))


def disc_loss(disc: Discriminator, generator_pairs, expert_like_pairs) -> float:
    return disc_loss_and_grad(disc, generator_pairs, expert_like_pairs)[0]


def formation_reward(score, formation: RewardFormation | str = "r1", score_semantics: str | None = None):
    """Apply one of r1..r4 to an (expert-likeness) score.

    ``raw_logit``: ``dis`` is the score itself and ``sig(dis)`` its sigmoid.
    ``probability``: ``dis`` is the already-squashed ``D = sigmoid(score)``,
    and ``sig(dis)`` in r1/r4 refers to that same D. r1 is the same function
    under both readings; r3 and r4 only coincide under ``raw_logit``.
    """
    if isinstance(formation, str):
        formation = RewardFormation(formation, score_semantics or "raw_logit")
    x = np.asarray(score, dtype=np.float64)
    kind = formation.kind
    if kind == "r1":
        # -log(1 - sig(x))
        return softplus(x)
    if kind == "r4":
        # log sig(x) - log(1 - sig(x)), evaluated without cancellation
        return softplus(x) - softplus(-x)
    dis = x if formation.score_semantics == "raw_logit" else sigmoid(x)
    if kind == "r2":
        return np.log(np.maximum(np.clip(dis, 0.0, 1.0), PROB_EPS))
    return dis


def reward(disc: Discriminator, formation: RewardFormation, state_goal, action):
    """Policy reward for (state||goal, action) pairs."""
    return formation_reward(REWARD_SCORE_SIGN * np.asarray(disc_score(disc, state_goal, action)), formation)


def reward_batch(disc: Discriminator, formation: RewardFormation, batch) -> np.ndarray:
    """Per-step rewards (N, T) for a trajectory batch, using its own goals."""
    sg = batch.state_goal()
    n, t, d = sg.shape
    r = reward(disc, formation, sg.reshape(n * t, d), batch.actions.reshape(n * t, -1))
    return np.asarray(r).reshape(n, t)


def reward_trajectory(disc: Discriminator, formation: RewardFormation, traj) -> np.ndarray:
    return reward_batch(disc, formation, traj.as_batch())[0]

"""Policy optimization: PPO with a learned value baseline, and MLE pre-training."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .nn import GaussianPolicy, InputScaler, MlpParams, backward, forward, policy_entropy
from .rollout import TrajectoryBatch


class NonFiniteError(FloatingPointError):
    """A gradient or loss became NaN/inf; ``diagnostics`` holds the context."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class Adam:
    """Adam on a list of arrays, updated in place (minimization)."""

    def __init__(self, arrays, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, arrays, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale = self.lr * math.sqrt(1.0 - b2**self.t) / (1.0 - b1**self.t)
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            kernels.adam_update(a, g, m, v, scale, b1, b2, self.eps)


class Sgd:
    def __init__(self, arrays, lr=1e-3):
        self.lr = lr

    def step(self, arrays, grads):
        for a, g in zip(arrays, grads):
            a -= self.lr * g


@dataclass
class ValueNet:
    net: MlpParams
    scaler: InputScaler | None = None

    @classmethod
    def init(cls, input_dim: int, rng, hidden=(64, 64), scaler: InputScaler | None = None) -> "ValueNet":
        return cls(MlpParams.init([input_dim, *hidden, 1], rng), scaler)

    def inputs(self, state_goal) -> np.ndarray:
        return state_goal if self.scaler is None else self.scaler(state_goal)

    def predict(self, state_goal) -> np.ndarray:
        out, _ = forward(self.net, self.inputs(state_goal))
        return out[..., 0]

    def copy(self) -> "ValueNet":
        return ValueNet(self.net.copy(), self.scaler)


@dataclass(frozen=True)
class PpoConfig:
    clip_ratio: float = 0.2
    gae_lambda: float = 0.95
    discount: float = 0.98
    epochs_per_batch: int = 2
    minibatch_size: int = 128
    learning_rate: float = 1e-3
    value_learning_rate: float = 1e-3
    entropy_weight: float = 0.0
    normalize_advantages: bool = True

    def __post_init__(self):
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError("clip_ratio must lie in (0, 1)")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.epochs_per_batch < 1 or self.minibatch_size < 1:
            raise ValueError("epochs_per_batch and minibatch_size must be positive")


@dataclass
class AdvantageBatch:
    features: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    advantages: np.ndarray
    value_targets: np.ndarray
    values: np.ndarray
    raw_advantages: np.ndarray = field(default=None)

    def __len__(self) -> int:
        return len(self.advantages)


def compute_advantages(batch: TrajectoryBatch, rewards, value: ValueNet, config: PpoConfig) -> AdvantageBatch:
    """GAE over fixed-horizon episodes, value 0 after the final step."""
    rewards = np.asarray(rewards, dtype=np.float64)
    n, horizon = batch.n_episodes, batch.horizon
    if rewards.shape != (n, horizon):
        raise ValueError(f"rewards shape {rewards.shape} does not match batch ({n}, {horizon})")
    sg = batch.state_goal()
    features = sg.reshape(n * horizon, -1)
    values = value.predict(features).reshape(n, horizon)
    adv = kernels.gae(np.ascontiguousarray(rewards), np.ascontiguousarray(values),
                      config.discount, config.gae_lambda)
    targets = adv + values
    flat_adv = adv.ravel()
    used = flat_adv
    if config.normalize_advantages:
        used = (flat_adv - flat_adv.mean()) / (flat_adv.std() + 1e-8)
    return AdvantageBatch(
        features, batch.actions.reshape(n * horizon, -1), batch.log_probs.ravel(),
        used, targets.ravel(), values.ravel(), flat_adv,
    )


def surrogate_loss_and_grad(policy: GaussianPolicy, features, actions, old_log_probs, advantages,
                            clip_ratio: float, entropy_weight: float = 0.0):
    """Negated clipped surrogate (to minimize), its gradient and statistics.

    Returns ``(loss, mean_grad, log_std_grad, stats)``.
    """
    mu, cache = policy.mean_forward(features)
    inv_var = np.exp(-2.0 * policy.log_std)
    diff = actions - mu
    k = policy.action_dim
    sq = diff * diff * inv_var
    logp = -0.5 * sq.sum(axis=1) - (0.5 * k * math.log(2 * math.pi) + policy.log_std.sum())
    ratio = np.exp(logp - old_log_probs)
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio)
    unclipped_obj = ratio * advantages
    clipped_obj = clipped * advantages
    m = len(advantages)
    entropy = policy_entropy(policy)
    surrogate = float(np.minimum(unclipped_obj, clipped_obj).sum()) / m
    loss = -surrogate - entropy_weight * entropy
    # gradient flows only where the unclipped term is the active minimum
    active = unclipped_obj <= clipped_obj
    dlogp = np.where(active, -ratio * advantages / m, 0.0)
    dmu = dlogp[:, None] * diff * inv_var
    grad = policy.mean_backward(cache, dmu)
    # d logp / d log_std = diff^2 * inv_var - 1 ; entropy contributes +1 per dim
    dlog_std = (dlogp[:, None] * (sq - 1.0)).sum(axis=0) - entropy_weight
    stats = {
        "surrogate": surrogate,
        "clip_fraction": float(np.count_nonzero(np.abs(ratio - 1.0) > clip_ratio)) / m,
        "approx_kl": float((old_log_probs - logp).sum()) / m,
        "entropy": entropy,
    }
    return float(loss), grad, dlog_std, stats


def value_loss_and_grad(value: ValueNet, features, targets):
    """0.5 * mean squared error of the value prediction."""
    out, cache = forward(value.net, value.inputs(features))
    err = out[:, 0] - targets
    loss = 0.5 * float(err @ err) / len(err)
    grad, _ = backward(value.net, cache, (err / len(err))[:, None])
    return float(loss), grad


def mle_loss_and_grad(policy: GaussianPolicy, features, actions):
    """Negative mean log-likelihood of the actions, gradient w.r.t. the mean net."""
    mu, cache = policy.mean_forward(features)
    inv_var = np.exp(-2.0 * policy.log_std)
    diff = actions - mu
    k = policy.action_dim
    logp = (-0.5 * np.sum(diff * diff * inv_var, axis=1) - 0.5 * k * math.log(2 * math.pi)
            - np.sum(policy.log_std))
    m = len(features)
    grad = policy.mean_backward(cache, -diff * inv_var / m)
    return float(-logp.mean()), grad


@dataclass
class PpoOptimizerState:
    policy_opt: Adam
    value_opt: Adam
    log_std_opt: Adam | None = None

    @classmethod
    def create(cls, policy: GaussianPolicy, value: ValueNet, config: PpoConfig) -> "PpoOptimizerState":
        return cls(
            Adam([policy.mean_net.data], config.learning_rate),
            Adam([value.net.data], config.value_learning_rate),
            Adam([policy.log_std], config.learning_rate) if policy.learn_std else None,
        )


def _check_finite(grads, name, diagnostics):
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite {name} gradient", diagnostics)


def ppo_update(policy: GaussianPolicy, value: ValueNet, adv: AdvantageBatch, config: PpoConfig,
               rng: np.random.Generator, state: PpoOptimizerState | None = None):
    """Clipped-surrogate epochs over ``adv``. Returns (policy, value, diagnostics).

    The inputs are not modified; ``state`` carries optimizer moments between
    calls and is created fresh when omitted.
    """
    if not np.all(np.isfinite(adv.advantages)):
        raise NonFiniteError("non-finite advantages", {"n": len(adv)})
    policy = policy.copy()
    value = value.copy()
    if state is None:
        state = PpoOptimizerState.create(policy, value, config)
    m = len(adv)
    sums = {"surrogate": 0.0, "clip_fraction": 0.0, "approx_kl": 0.0, "value_loss": 0.0}
    n_steps = 0
    for _ in range(config.epochs_per_batch):
        order = rng.permutation(m)
        for start in range(0, m, config.minibatch_size):
            idx = order[start : start + config.minibatch_size]
            _, pgrad, dlog_std, stats = surrogate_loss_and_grad(
                policy, adv.features[idx], adv.actions[idx], adv.log_probs[idx],
                adv.advantages[idx], config.clip_ratio, config.entropy_weight,
            )
            vloss, vgrad = value_loss_and_grad(value, adv.features[idx], adv.value_targets[idx])
            diag = {**stats, "value_loss": vloss, "step": n_steps}
            _check_finite([pgrad.data], "policy", diag)
            _check_finite([vgrad.data], "value", diag)
            state.policy_opt.step([policy.mean_net.data], [pgrad.data])
            state.value_opt.step([value.net.data], [vgrad.data])
            if state.log_std_opt is not None:
                state.log_std_opt.step([policy.log_std], [dlog_std])
            for key in ("surrogate", "clip_fraction", "approx_kl"):
                sums[key] += stats[key]
            sums["value_loss"] += vloss
            n_steps += 1
    diagnostics = {k: v / n_steps for k, v in sums.items()}
    diagnostics["entropy"] = policy_entropy(policy)
    diagnostics["updates"] = n_steps
    return policy, value, diagnostics


def pair_arrays(expert_like) -> tuple[np.ndarray, np.ndarray]:
    """(state||goal, action) rows from a TrajectoryBatch or relabeled episodes."""
    if isinstance(expert_like, TrajectoryBatch):
        batch = expert_like
    else:
        from .hindsight import relabeled_to_batch

        batch = relabeled_to_batch(list(expert_like))
    sg = batch.state_goal()
    return sg.reshape(-1, sg.shape[-1]), batch.actions.reshape(-1, batch.actions.shape[-1])


def mle_pretrain(policy: GaussianPolicy, expert_like, steps: int, rng: np.random.Generator,
                 learning_rate: float = 1e-3, batch_size: int = 128, optimizer: str = "adam"):
    """Fit the mean network to expert-like pairs by maximum likelihood.

    With a fixed covariance this is least-squares regression of the mean onto
    the actions. Returns ``(policy, losses)`` with one loss per step.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    features, actions = pair_arrays(expert_like)
    if len(features) == 0:
        raise ValueError("no pairs to pre-train on")
    policy = policy.copy()
    arrays = [policy.mean_net.data]
    opt = Adam(arrays, learning_rate) if optimizer == "adam" else Sgd(arrays, learning_rate)
    losses = []
    for _ in range(steps):
        if len(features) <= batch_size:
            idx = slice(None)
        else:
            idx = rng.integers(0, len(features), size=batch_size)
        loss, grad = mle_loss_and_grad(policy, features[idx], actions[idx])
        _check_finite([grad.data], "mle", {"loss": loss})
        opt.step(arrays, [grad.data])
        losses.append(loss)
    return policy, losses

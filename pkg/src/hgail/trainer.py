"""Adversarial training loop with self-generated expert data, plus baselines.

One iteration is ``g_steps`` generator phases (collect, score with the
discriminator, PPO update) followed by ``d_steps`` discriminator phases
(collect fresh rollouts, build positives, gradient step). The algorithms
differ only in where the discriminator's positive samples come from:

* ``hgail``      hindsight-relabeled rollouts (frozen iteration-zero set when
                 the curriculum is off)
* ``hgail_no``   the rollouts themselves, unrelabeled
* ``gasil``      top-K past episodes by environment return
* ``gail_demo``  scripted-expert demonstrations
* ``ppo_sparse`` no discriminator; PPO on the sparse environment reward
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import checkpoint as ckpt
from . import env as envlib
from .adversary import (Discriminator, RewardFormation, disc_inputs, disc_loss_and_grad_rows,
                        reward_batch)
from .env import EnvConfig
from .hindsight import FrozenSource, HindsightConfig, relabel
from .metrics import MetricsRecord, distance_errors, success_rate, write_curve
from .nn import GaussianPolicy, InputScaler, MlpParams, policy_entropy
from .optim import (Adam, PpoConfig, PpoOptimizerState, ValueNet, compute_advantages,
                    mle_pretrain, ppo_update)
from .rollout import TrajectoryBatch, collect, collect_deterministic, collect_expert, to_feature_pairs

log = logging.getLogger(__name__)

ALGORITHMS = ("hgail", "gail_demo", "ppo_sparse", "gasil", "hgail_no")
EVAL_SEED_SALT = 0x5EED


@dataclass(frozen=True)
class TrainConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    hindsight: HindsightConfig = field(default_factory=HindsightConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    algorithm: str = "hgail"
    iterations: int = 500
    g_steps: int = 16
    d_steps: int = 3
    episodes_per_iteration: int = 16
    pretrain_gen_steps: int = 100
    pretrain_disc_steps: int = 500
    disc_learning_rate: float = 4e-4
    disc_batch_size: int = 64
    disc_updates_per_step: int = 100
    normalize_inputs: bool = True
    mean_bound: float = 1.0
    anneal_lr: bool = True
    reward_formation: str = "r1"
    score_semantics: str = "raw_logit"
    policy_cov: float = 1.0
    learn_std: bool = False
    gasil_k: int = 16
    demo_episodes: int = 1024
    eval_episodes: int = 50
    early_stop: bool = False
    checkpoint_every: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.g_steps < 0 or self.d_steps < 0 or self.iterations < 0:
            raise ValueError("g_steps, d_steps and iterations must be non-negative")
        if self.episodes_per_iteration < 1 or self.eval_episodes < 1:
            raise ValueError("episode counts must be positive")
        if self.disc_batch_size < 2:
            raise ValueError("disc_batch_size must be at least 2")
        if self.disc_updates_per_step < 1:
            raise ValueError("disc_updates_per_step must be >= 1")
        if self.gasil_k < 1:
            raise ValueError("gasil_k must be >= 1")
        RewardFormation(self.reward_formation, self.score_semantics)

    @property
    def formation(self) -> RewardFormation:
        return RewardFormation(self.reward_formation, self.score_semantics)

    @property
    def adversarial(self) -> bool:
        return self.algorithm != "ppo_sparse"


class GasilBuffer:
    """Top-K episodes by environment return; ties go to the most recent."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: list[tuple[float, int, TrajectoryBatch]] = []
        self._counter = 0
        self._batch = None

    def __len__(self) -> int:
        return len(self._entries)

    def add(self, batch: TrajectoryBatch) -> None:
        returns = batch.episode_returns
        for i in range(batch.n_episodes):
            self._entries.append((float(returns[i]), self._counter, batch.subset(i)))
            self._counter += 1
        self._entries.sort(key=lambda e: (e[0], e[1]), reverse=True)
        del self._entries[self.capacity :]
        self._batch = None

    @property
    def returns(self) -> np.ndarray:
        return np.array([e[0] for e in self._entries])

    @property
    def min_return(self) -> float:
        return float(self.returns.min()) if self._entries else -np.inf

    def batch(self) -> TrajectoryBatch:
        if not self._entries:
            raise ValueError("GASIL buffer is empty")
        if self._batch is None:
            self._batch = TrajectoryBatch.concatenate(e[2] for e in self._entries)
        return self._batch


@dataclass
class TrainerState:
    config: TrainConfig
    policy: GaussianPolicy
    value: ValueNet
    disc: Discriminator | None
    ppo_opt: PpoOptimizerState
    disc_opt: Adam | None
    rng: np.random.Generator
    frozen: FrozenSource | None = None
    gasil: GasilBuffer | None = None
    demos: TrajectoryBatch | None = None
    iteration: int = 0
    policy_version: int = 0
    last_disc_loss: float = np.nan

    def checkpoint_entries(self) -> dict:
        entries = policy_entries(self.policy, self.config.env, self.iteration)
        entries["value"] = self.value.net
        if self.disc is not None:
            entries["disc"] = self.disc.net
        return entries

    def save(self, path) -> None:
        ckpt.save(path, self.checkpoint_entries())


def init_state(config: TrainConfig) -> TrainerState:
    rng = np.random.default_rng(config.seed)
    obs_dim = config.env.obs_dim
    in_dim = obs_dim + envlib.GOAL_DIM
    scaler = InputScaler(*envlib.feature_scaling(config.env)) if config.normalize_inputs else None
    policy = GaussianPolicy.init(in_dim, envlib.ACTION_DIM, rng, cov=config.policy_cov,
                                 learn_std=config.learn_std, scaler=scaler,
                                 mean_bound=config.mean_bound or None)
    value = ValueNet.init(in_dim, rng, scaler=scaler)
    disc = Discriminator.init(obs_dim, rng, scaler=scaler) if config.adversarial else None
    ppo_opt = PpoOptimizerState.create(policy, value, config.ppo)
    disc_opt = Adam([disc.net.data], config.disc_learning_rate) if disc is not None else None
    return TrainerState(config, policy, value, disc, ppo_opt, disc_opt, rng)


def _positive_batch(state: TrainerState, rollouts: TrajectoryBatch) -> TrajectoryBatch:
    """Expert-like episodes for one discriminator phase."""
    cfg = state.config
    if cfg.algorithm == "hgail":
        return relabel(rollouts, cfg.hindsight, state.rng)
    if cfg.algorithm == "hgail_no":
        return rollouts
    if cfg.algorithm == "gasil":
        return state.gasil.batch()
    return state.demos


def _disc_phase(state: TrainerState, negatives: TrajectoryBatch, positives, n_updates: int) -> float:
    """``n_updates`` discriminator steps on half/half minibatches; returns the last loss."""
    cfg = state.config
    half = cfg.disc_batch_size // 2
    neg = disc_inputs(state.disc, *to_feature_pairs(negatives))
    pos = disc_inputs(state.disc, *(positives.pairs() if isinstance(positives, FrozenSource)
                                    else to_feature_pairs(positives)))
    loss = np.nan
    for _ in range(n_updates):
        gen = neg[state.rng.integers(0, len(neg), size=half)]
        exp = pos[state.rng.integers(0, len(pos), size=half)]
        loss, grad = disc_loss_and_grad_rows(state.disc, gen, exp)
        if not grad.is_finite():
            raise FloatingPointError(f"non-finite discriminator gradient at iteration {state.iteration}")
        state.disc_opt.step([state.disc.net.data], [grad.data])
    return loss


def pretrain(config: TrainConfig, state: TrainerState | None = None) -> TrainerState:
    """Collect tau_0, build its positives, then MLE and discriminator pre-training."""
    state = state or init_state(config)
    if not config.adversarial:
        return state
    tau0 = collect(state.policy, config.env, config.episodes_per_iteration, state.rng)
    if config.algorithm == "gail_demo":
        state.demos = collect_expert(config.env, config.demo_episodes, state.rng,
                                     action_std=np.exp(state.policy.log_std))
    if config.algorithm == "gasil":
        state.gasil = GasilBuffer(config.gasil_k)
        state.gasil.add(tau0)
    positives = _positive_batch(state, tau0)
    if config.algorithm == "hgail" and not config.hindsight.curriculum:
        state.frozen = FrozenSource(positives)
    if config.pretrain_gen_steps > 0:
        state.policy, _ = mle_pretrain(state.policy, positives, config.pretrain_gen_steps, state.rng,
                                       config.ppo.learning_rate, config.ppo.minibatch_size)
    source = state.frozen if state.frozen is not None else positives
    if config.pretrain_disc_steps > 0:
        state.last_disc_loss = _disc_phase(state, tau0, source, config.pretrain_disc_steps)
    return state


def evaluate(policy: GaussianPolicy, config: TrainConfig, episodes: int | None = None):
    """Mean-action episodes on a fixed goal set. Returns (success, dist mean, dist std)."""
    episodes = episodes or config.eval_episodes
    rng = np.random.default_rng([config.seed, EVAL_SEED_SALT])
    batch = collect_deterministic(policy, config.env, episodes, rng)
    return evaluate_batch(batch, config.env)


def evaluate_batch(batch: TrajectoryBatch, env_config: EnvConfig):
    final_obs = batch.observations[:, -1]
    goals = batch.goals[:, -1]
    achieved = batch.achieved[:, -1]
    l1 = distance_errors(achieved, goals)
    l2 = np.linalg.norm(achieved - goals, axis=1)
    if env_config.task == "grasp":
        l2 = np.where(envlib.holding(final_obs, env_config), l2, np.inf)
    return success_rate(l2, env_config.success_radius), float(l1.mean()), float(l1.std())


def generator_lr_factor(config: TrainConfig, iteration: int) -> float:
    """Linear decay from 1 at the first iteration to 1/iterations at the last."""
    if not config.anneal_lr or config.iterations == 0:
        return 1.0
    return max(1.0 - iteration / config.iterations, 1.0 / config.iterations)


def train_iteration(state: TrainerState) -> tuple[TrainerState, MetricsRecord]:
    cfg = state.config
    start = time.perf_counter()
    factor = generator_lr_factor(cfg, state.iteration)
    state.ppo_opt.policy_opt.lr = cfg.ppo.learning_rate * factor
    if state.ppo_opt.log_std_opt is not None:
        state.ppo_opt.log_std_opt.lr = cfg.ppo.learning_rate * factor
    surrogate, clip_frac, n_updates = 0.0, 0.0, 0
    for _ in range(cfg.g_steps):
        batch = collect(state.policy, cfg.env, cfg.episodes_per_iteration, state.rng, state.policy_version)
        if cfg.adversarial:
            rewards = reward_batch(state.disc, cfg.formation, batch)
        else:
            rewards = batch.env_rewards.astype(np.float64)
        adv = compute_advantages(batch, rewards, state.value, cfg.ppo)
        state.policy, state.value, diag = ppo_update(state.policy, state.value, adv, cfg.ppo,
                                                     state.rng, state.ppo_opt)
        state.policy_version += 1
        surrogate += diag["surrogate"]
        clip_frac += diag["clip_fraction"]
        n_updates += 1
        if state.gasil is not None:
            state.gasil.add(batch)
    if cfg.adversarial:
        for _ in range(cfg.d_steps):
            rollouts = collect(state.policy, cfg.env, cfg.episodes_per_iteration, state.rng, state.policy_version)
            positives = state.frozen if state.frozen is not None else _positive_batch(state, rollouts)
            state.last_disc_loss = _disc_phase(state, rollouts, positives, cfg.disc_updates_per_step)
    if not (state.policy.mean_net.is_finite() and state.value.net.is_finite()
            and (state.disc is None or state.disc.net.is_finite())):
        raise FloatingPointError(f"non-finite parameters after iteration {state.iteration + 1}")
    state.iteration += 1
    record = _record(state, surrogate / max(n_updates, 1) if n_updates else np.nan,
                     clip_frac / n_updates if n_updates else np.nan, time.perf_counter() - start)
    return state, record


def _record(state: TrainerState, surrogate=np.nan, clip_fraction=np.nan, wall_time=0.0) -> MetricsRecord:
    succ, dmean, dstd = evaluate(state.policy, state.config)
    return MetricsRecord(
        iteration=state.iteration, success_rate=succ, distance_error_mean=dmean, distance_error_std=dstd,
        disc_loss=float(state.last_disc_loss), policy_surrogate=float(surrogate),
        clip_fraction=float(clip_fraction), entropy=policy_entropy(state.policy), wall_time=wall_time,
    )


@dataclass
class RunResult:
    curve: list[MetricsRecord]
    state: TrainerState


def run(config: TrainConfig, out_dir=None, progress=None) -> RunResult:
    """Pre-train, then ``config.iterations`` iterations (or until early stop)."""
    start = time.perf_counter()
    state = pretrain(config)
    curve = [_record(state, wall_time=time.perf_counter() - start)]
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    for _ in range(config.iterations):
        state, rec = train_iteration(state)
        curve.append(rec)
        if progress is not None:
            progress(rec)
        if out_dir is not None:
            write_curve(curve, os.path.join(out_dir, "curve.csv"))
            if config.checkpoint_every and state.iteration % config.checkpoint_every == 0:
                state.save(os.path.join(out_dir, f"checkpoint_{state.iteration:05d}.bin"))
        if config.early_stop and len(curve) > 20 and np.mean([r.success_rate for r in curve[-20:]]) >= 0.95:
            log.info("early stop at iteration %d", state.iteration)
            break
    if out_dir is not None:
        write_curve(curve, os.path.join(out_dir, "curve.csv"))
        write_curve(curve, os.path.join(out_dir, "timing.csv"), include_wall_time=True)
        state.save(os.path.join(out_dir, "final.bin"))
    return RunResult(curve, state)


def run_baseline_gail_demo(config: TrainConfig, out_dir=None) -> RunResult:
    return run(replace(config, algorithm="gail_demo"), out_dir)


def run_baseline_gasil(config: TrainConfig, out_dir=None) -> RunResult:
    return run(replace(config, algorithm="gasil"), out_dir)


def run_baseline_hgail_no(config: TrainConfig, out_dir=None) -> RunResult:
    return run(replace(config, algorithm="hgail_no"), out_dir)


def run_baseline_ppo(config: TrainConfig, out_dir=None) -> RunResult:
    return run(replace(config, algorithm="ppo_sparse"), out_dir)


def policy_entries(policy: GaussianPolicy, env_config: EnvConfig, iteration: int = 0) -> dict:
    """Checkpoint entries that fully describe a policy."""
    entries = {
        "policy_mean": policy.mean_net,
        "policy_log_std": policy.log_std,
        "policy_mean_bound": np.array([policy.mean_bound or 0.0]),
        "meta": np.array([env_config.obs_dim, envlib.ACTION_DIM, envlib.TASKS.index(env_config.task),
                          iteration], dtype=np.float64),
    }
    if policy.scaler is not None:
        entries["input_scaler"] = policy.scaler.as_array()
    return entries


def policy_from_checkpoint(entries: dict, env_config: EnvConfig) -> GaussianPolicy:
    """Rebuild the policy, refusing checkpoints built for another layout."""
    if "policy_mean" not in entries:
        raise ValueError("checkpoint has no policy network")
    net: MlpParams = entries["policy_mean"]
    expected_in = env_config.obs_dim + envlib.GOAL_DIM
    if net.input_dim != expected_in or net.output_dim != envlib.ACTION_DIM:
        raise ValueError(
            f"checkpoint policy maps {net.input_dim} -> {net.output_dim}, "
            f"task {env_config.task!r} needs {expected_in} -> {envlib.ACTION_DIM}"
        )
    if "meta" in entries and int(entries["meta"][2]) != envlib.TASKS.index(env_config.task):
        raise ValueError(f"checkpoint was trained on {envlib.TASKS[int(entries['meta'][2])]!r}, "
                         f"not {env_config.task!r}")
    log_std = entries.get("policy_log_std", np.zeros(envlib.ACTION_DIM))
    bound = float(entries.get("policy_mean_bound", np.zeros(1))[0]) or None
    scaler = InputScaler.from_array(entries["input_scaler"]) if "input_scaler" in entries else None
    return GaussianPolicy(net, np.asarray(log_std), scaler=scaler, mean_bound=bound)


def scripted_expert_policy(config: TrainConfig, hidden: int = 64) -> GaussianPolicy:
    """A policy whose mean network imitates the reach controller.

    Per axis the distance to the goal d goes through
    ``tanh(a * d / max_step)``, ``tanh(b * .)`` and an output gain chosen so
    the small-error slope is one step-closing unit (no overshoot) while large
    errors saturate the command. Input scaling and the mean bound of
    ``config`` are folded into the weights.
    """
    env_config = config.env
    if env_config.task != "reach":
        raise ValueError("the scripted-expert policy is only defined for reach")
    in_dim = env_config.obs_dim + envlib.GOAL_DIM
    scaler = InputScaler(*envlib.feature_scaling(env_config)) if config.normalize_inputs else None
    bound = config.mean_bound or None
    if bound is None:
        a, b, gain = 0.5, 1.0, 2.0
    else:
        a, b, gain = 1.0 / 6.0, 2.0, 3.0 / bound
    # position-to-input factor: d = raw difference = (scaled difference) / scale
    per_unit = np.ones(in_dim) if scaler is None else 1.0 / scaler.scale
    net = MlpParams.zeros([in_dim, hidden, hidden, envlib.ACTION_DIM])
    g0 = env_config.obs_dim
    for axis in range(3):
        net.weights[0][axis, axis] = -a * per_unit[axis] / env_config.max_step
        net.weights[0][axis, g0 + axis] = a * per_unit[g0 + axis] / env_config.max_step
        net.weights[1][axis, axis] = b
        net.weights[2][axis, axis] = gain
    log_std = np.full(envlib.ACTION_DIM, 0.5 * np.log(config.policy_cov))
    return GaussianPolicy(net, log_std, scaler=scaler, mean_bound=bound)

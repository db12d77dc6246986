"""Linear Q-learning for the blue defender.

The policy is a per-action linear value head over the flattened, per-column
normalized observation matrix plus a bias term. Ties in the greedy argmax
always resolve to the lowest action index so evaluation is reproducible.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, ContractViolationError, NumericError
from .game import (
    EpisodeRecord,
    GameConfig,
    N_FEATURES,
    ObservationMatrix,
    TERMINATIONS,
    action_space_size,
    decode_action_index,
    episode_seed,
    reset,
    step,
)
from .netmodel import HostId


@dataclass
class Policy:
    host_ids: tuple[HostId, ...]
    weights: np.ndarray  # (n_actions, n_hosts * N_FEATURES + 1)
    feature_max: np.ndarray  # (N_FEATURES,) running per-column max, training-time only

    @classmethod
    def zeros(cls, host_ids: tuple[HostId, ...]) -> "Policy":
        n_actions = action_space_size(len(host_ids))
        dim = len(host_ids) * N_FEATURES + 1
        return cls(
            host_ids=tuple(host_ids),
            weights=np.zeros((n_actions, dim), dtype=np.float64),
            feature_max=np.ones(N_FEATURES, dtype=np.float64),
        )

    @property
    def n_actions(self) -> int:
        return self.weights.shape[0]

    def featurize(self, obs: ObservationMatrix) -> np.ndarray:
        scale = np.maximum(self.feature_max, 1.0)
        flat = (obs.counts / scale).reshape(-1)
        return np.concatenate([flat, [1.0]])

    def q_values(self, obs: ObservationMatrix) -> np.ndarray:
        return self.weights @ self.featurize(obs)

    def greedy_index(self, obs: ObservationMatrix) -> int:
        # np.argmax already picks the first maximum, i.e. the lowest index.
        return int(np.argmax(self.q_values(obs)))

    def action_distribution(self, obs: ObservationMatrix) -> np.ndarray:
        """One-hot greedy distribution; the probe surface handed to attackers."""
        p = np.zeros(self.n_actions, dtype=np.float64)
        p[self.greedy_index(obs)] = 1.0
        return p

    def save(self, path: str) -> None:
        payload = {
            "host_ids": list(self.host_ids),
            "feature_max": self.feature_max.tolist(),
            "weights": self.weights.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, separators=(",", ":"))

    @classmethod
    def load(cls, path: str) -> "Policy":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(
            host_ids=tuple(payload["host_ids"]),
            weights=np.asarray(payload["weights"], dtype=np.float64),
            feature_max=np.asarray(payload["feature_max"], dtype=np.float64),
        )


def _check_obs_shape(policy: Policy, obs: ObservationMatrix) -> None:
    if obs.counts.shape != (len(policy.host_ids), N_FEATURES):
        raise ContractViolationError(
            f"observation shape {obs.counts.shape} does not match policy over "
            f"{len(policy.host_ids)} hosts x {N_FEATURES} features"
        )


def act_index(policy: Policy, obs: ObservationMatrix, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy action index."""
    _check_obs_shape(policy, obs)
    if not (0.0 <= epsilon <= 1.0):
        raise ConfigError(f"epsilon must be in [0, 1], got {epsilon!r}")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(policy.n_actions))
    return policy.greedy_index(obs)


def act(policy: Policy, obs: ObservationMatrix, epsilon: float, rng: np.random.Generator):
    """Epsilon-greedy action selection, decoded to a concrete blue action."""
    return decode_action_index(act_index(policy, obs, epsilon, rng), policy.host_ids)


@dataclass(frozen=True)
class Transition:
    obs: ObservationMatrix
    action_index: int
    reward: float
    next_obs: ObservationMatrix
    done: bool


def update(policy: Policy, batch: list[Transition], lr: float, gamma: float) -> Policy:
    """One TD(0) pass over the batch, applied sequentially in batch order.

    Returns a new Policy; with lr == 0 the weights come back bitwise unchanged.
    """
    if not batch:
        raise ContractViolationError("update requires a non-empty batch")
    w = policy.weights.copy()
    out = replace(policy, weights=w)
    with np.errstate(invalid="ignore", over="ignore"):  # non-finite caught below
        for t in batch:
            phi = out.featurize(t.obs)
            q = float(w[t.action_index] @ phi)
            target = t.reward
            if not t.done:
                target += gamma * float(np.max(w @ out.featurize(t.next_obs)))
            w[t.action_index] += lr * (target - q) * phi
    if not np.isfinite(w).all():
        raise NumericError("policy weights diverged to non-finite values; lower the learning rate")
    return out


# --- training ----------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 40_000
    lr: float = 0.01
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.6
    buffer_size: int = 10_000
    batch_size: int = 32
    eval_every: int = 5_000
    eval_episodes: int = 50
    workers: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.total_steps < 1:
            raise ConfigError("train.total_steps must be >= 1")
        if not (0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0):
            raise ConfigError("train epsilon schedule must satisfy 0 <= end <= start <= 1")
        if not (0.0 < self.epsilon_decay_fraction <= 1.0):
            raise ConfigError("train.epsilon_decay_fraction must be in (0, 1]")
        if self.lr <= 0:
            raise ConfigError("train.lr must be > 0")
        if not (0.0 <= self.gamma <= 1.0):
            raise ConfigError("train.gamma must be in [0, 1]")
        if self.buffer_size < self.batch_size or self.batch_size < 1:
            raise ConfigError("train buffer must hold at least one batch")
        if self.eval_every < 1 or self.eval_episodes < 1:
            raise ConfigError("train eval cadence and episode count must be >= 1")
        if self.workers < 1:
            raise ConfigError("train.workers must be >= 1")


@dataclass(frozen=True)
class CurvePoint:
    step: int
    mean_eval_return: float
    real_exfil_rate: float
    fake_exfil_rate: float
    concede_rate: float


@dataclass
class TrainingCurve:
    points: list[CurvePoint] = field(default_factory=list)

    def csv_rows(self) -> list[str]:
        rows = ["step,mean_eval_return,real_exfil_rate,fake_exfil_rate,concede_rate"]
        for p in self.points:
            rows.append(
                f"{p.step},{p.mean_eval_return!r},{p.real_exfil_rate!r},"
                f"{p.fake_exfil_rate!r},{p.concede_rate!r}"
            )
        return rows


@dataclass
class EvalSummary:
    n_episodes: int
    mean_return: float
    mean_length: float
    termination_rates: dict[str, float]
    records: list[EpisodeRecord]


def evaluate(
    policy: Policy, config: GameConfig, n_episodes: int, seed: Optional[int] = None
) -> EvalSummary:
    """Greedy rollouts over seeds derived from `seed` (default: config.seed).

    Every episode lands in exactly one termination bucket, and the reported
    rates sum to exactly 1.0: the most frequent bucket absorbs the float
    residual (it is iterated last, so the telescoped sum closes at 1).
    """
    if n_episodes < 1:
        raise ConfigError(f"evaluate needs n_episodes >= 1, got {n_episodes!r}")
    base = config.seed if seed is None else seed
    records: list[EpisodeRecord] = []
    counts = {t: 0 for t in TERMINATIONS}
    for i in range(n_episodes):
        cfg = replace(config, seed=episode_seed(base, i))
        rec = _rollout_greedy(policy, cfg)
        records.append(rec)
        counts[rec.termination] += 1
    absorber = max(TERMINATIONS, key=lambda t: counts[t])  # first-listed wins ties
    rates: dict[str, float] = {}
    partial = 0.0
    for name in TERMINATIONS:
        if name != absorber:
            rates[name] = counts[name] / n_episodes
            partial += rates[name]
    rates[absorber] = 1.0 - partial
    mean_return = float(np.mean([r.total_reward for r in records]))
    mean_length = float(np.mean([r.length for r in records]))
    return EvalSummary(
        n_episodes=n_episodes,
        mean_return=mean_return,
        mean_length=mean_length,
        termination_rates=rates,
        records=records,
    )


def _rollout_greedy(policy: Policy, cfg: GameConfig) -> EpisodeRecord:
    t0 = time.perf_counter()
    episode, obs = reset(cfg, policy_probe=policy.action_distribution)
    steps = 0
    total = 0.0
    while not episode.done:
        result = step(episode, decode_action_index(policy.greedy_index(obs), policy.host_ids))
        obs = result.obs
        total += result.reward
        steps += 1
    return EpisodeRecord(
        seed=cfg.seed,
        total_reward=total,
        length=steps,
        termination=episode.termination or "timeout",
        wall_clock_ms=(time.perf_counter() - t0) * 1000.0,
    )


def _epsilon_at(cfg: TrainConfig, global_step: int) -> float:
    decay_steps = max(1, int(cfg.total_steps * cfg.epsilon_decay_fraction))
    frac = min(1.0, global_step / decay_steps)
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac


def _eval_point(policy: Policy, config: GameConfig, cfg: TrainConfig, at_step: int) -> CurvePoint:
    summary = evaluate(policy, config, cfg.eval_episodes, seed=episode_seed(cfg.seed, 0xE7A1))
    return CurvePoint(
        step=at_step,
        mean_eval_return=summary.mean_return,
        real_exfil_rate=summary.termination_rates["red_goal_achieved"],
        fake_exfil_rate=summary.termination_rates["red_believes_achieved"],
        concede_rate=summary.termination_rates["red_conceded"],
    )


def train(config: GameConfig, cfg: TrainConfig = TrainConfig()) -> tuple[Policy, TrainingCurve]:
    """Train a linear Q policy on the configured game.

    With workers == 1 the loop is fully online (one update per environment
    step) and bit-reproducible. With workers > 1, episodes are collected in
    rounds against a frozen policy snapshot and the transitions are merged in
    deterministic submission order before the update pass, so results are
    still reproducible, just not step-identical to the single-worker run.
    """
    cfg.validate()
    config.validate()
    ss = np.random.SeedSequence(cfg.seed)
    act_ss, buf_ss = ss.spawn(2)
    rng_act = np.random.Generator(np.random.PCG64(act_ss))
    rng_buf = np.random.Generator(np.random.PCG64(buf_ss))

    policy = Policy.zeros(tuple(sorted(range(config.topology.n_hosts))))
    buffer: list[Transition] = []
    curve = TrainingCurve()
    global_step = 0
    ep_index = 0
    next_eval = cfg.eval_every

    def push_and_learn(t: Transition) -> None:
        nonlocal policy
        if len(buffer) >= cfg.buffer_size:
            buffer.pop(0)
        buffer.append(t)
        policy = replace(
            policy, feature_max=np.maximum(policy.feature_max, t.next_obs.counts.max(axis=0))
        )
        if len(buffer) >= cfg.batch_size:
            idx = rng_buf.integers(len(buffer), size=cfg.batch_size)
            policy = update(policy, [buffer[i] for i in idx], cfg.lr, cfg.gamma)

    def run_episode(ep_seed: int, frozen: Policy, eps: float, ep_rng: np.random.Generator):
        """Collect one episode's transitions without touching shared state."""
        cfg_i = replace(config, seed=ep_seed)
        episode, obs = reset(cfg_i, policy_probe=frozen.action_distribution)
        out: list[Transition] = []
        while not episode.done:
            a = act_index(frozen, obs, eps, ep_rng)
            result = step(episode, decode_action_index(a, frozen.host_ids))
            out.append(Transition(obs, a, result.reward, result.obs, result.done))
            obs = result.obs
        return out

    if cfg.workers == 1:
        while global_step < cfg.total_steps:
            cfg_i = replace(config, seed=episode_seed(config.seed, ep_index))
            ep_index += 1
            probe_policy = policy  # snapshot: the attacker probes episode-start weights
            episode, obs = reset(cfg_i, policy_probe=probe_policy.action_distribution)
            while not episode.done and global_step < cfg.total_steps:
                eps = _epsilon_at(cfg, global_step)
                a = act_index(policy, obs, eps, rng_act)
                result = step(episode, decode_action_index(a, policy.host_ids))
                push_and_learn(Transition(obs, a, result.reward, result.obs, result.done))
                obs = result.obs
                global_step += 1
                if global_step >= next_eval:
                    curve.points.append(_eval_point(policy, config, cfg, global_step))
                    next_eval += cfg.eval_every
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            while global_step < cfg.total_steps:
                frozen = policy
                eps = _epsilon_at(cfg, global_step)
                jobs = []
                for _ in range(cfg.workers):
                    ep_rng = np.random.Generator(
                        np.random.PCG64(np.random.SeedSequence([cfg.seed, 0xA11, ep_index]))
                    )
                    jobs.append(
                        pool.submit(
                            run_episode, episode_seed(config.seed, ep_index), frozen, eps, ep_rng
                        )
                    )
                    ep_index += 1
                for job in jobs:  # submission order, not completion order
                    for t in job.result():
                        push_and_learn(t)
                        global_step += 1
                        if global_step >= next_eval:
                            curve.points.append(_eval_point(policy, config, cfg, global_step))
                            next_eval += cfg.eval_every

    if not curve.points or curve.points[-1].step != global_step:
        curve.points.append(_eval_point(policy, config, cfg, global_step))
    return policy, curve

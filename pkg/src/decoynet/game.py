"""Turn-based game engine: blue action, gray traffic, red action, observation,
reward, termination. Step order and termination priority are fixed contracts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from .agents import (
    Concede,
    FrustrateGray,
    GrayAppSpec,
    GrayLike,
    RED_GOALS,
    RedBelief,
    RedOutcome,
    apply_red_action,
    gray_step,
    initial_red_belief,
    red_plan_step,
    red_update_belief,
)
from .behavior import TraceEvent
from .errors import (
    ConfigError,
    ContractViolationError,
    EpisodeFinishedError,
    InvalidActionError,
)
from .netmodel import (
    RAT_NONE,
    HostId,
    NetworkState,
    TopologySpec,
    generate_network,
    isolate_host,
    migrate_to_honey,
)

FEATURES = (
    "scp_events",
    "http_events",
    "amq_events",
    "ssh_events",
    "recon_quiet_events",
    "recon_aggressive_events",
    "scp_failures",
    "rest_failures",
    "amqp_failures",
    "ssh_failures",
    "content_searches",
)
N_FEATURES = len(FEATURES)

# Events count at their origin host for the traffic/recon/search columns and,
# when failed, at their target host for the failure columns. Lateral movement
# rides ssh; exfiltration rides scp. frustrate maps to no column.
_ORIGIN_COL = {
    "scp": 0,
    "exfiltrate": 0,
    "http_rest": 1,
    "amqp": 2,
    "ssh": 3,
    "lateral_move": 3,
    "recon_quiet": 4,
    "recon_aggressive": 5,
    "content_search": 10,
}
_FAIL_COL = {
    "scp": 6,
    "exfiltrate": 6,
    "http_rest": 7,
    "amqp": 8,
    "ssh": 9,
    "lateral_move": 9,
}

TERMINATIONS = (
    "blue_terminated",
    "red_goal_achieved",
    "red_believes_achieved",
    "red_conceded",
    "timeout",
)

RED_MODES = ("traditional", "deceptive")


@dataclass
class ObservationMatrix:
    """Per-host event counts for one step; rows ordered by host id."""

    host_ids: tuple[HostId, ...]
    counts: np.ndarray  # shape (len(host_ids), N_FEATURES), int64

    @classmethod
    def zeros(cls, host_ids: tuple[HostId, ...]) -> "ObservationMatrix":
        return cls(host_ids=host_ids, counts=np.zeros((len(host_ids), N_FEATURES), dtype=np.int64))

    def copy(self) -> "ObservationMatrix":
        return ObservationMatrix(host_ids=self.host_ids, counts=self.counts.copy())

    def column(self, name: str) -> np.ndarray:
        return self.counts[:, FEATURES.index(name)]

    def row(self, host: HostId) -> np.ndarray:
        return self.counts[self.host_ids.index(host)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ObservationMatrix):
            return NotImplemented
        return self.host_ids == other.host_ids and np.array_equal(self.counts, other.counts)


def count_events(events, host_ids: tuple[HostId, ...]) -> np.ndarray:
    """Pure event-to-feature attribution; the single counting rule everywhere."""
    index = {h: i for i, h in enumerate(host_ids)}
    counts = np.zeros((len(host_ids), N_FEATURES), dtype=np.int64)
    for e in events:
        col = _ORIGIN_COL.get(e.kind)
        if col is not None and e.actor in index:
            counts[index[e.actor], col] += 1
        if not e.success and e.target is not None:
            fcol = _FAIL_COL.get(e.kind)
            if fcol is not None and e.target in index:
                counts[index[e.target], fcol] += 1
    return counts


@dataclass(frozen=True)
class RewardParams:
    r_fake_exfil: float = 1.0
    r_real_exfil: float = -1.0
    r_isolate_compromised: float = 0.5
    r_honey_trap: float = 0.8
    p_wrong_action: float = -0.2
    p_migration_cost_new: float = -0.1
    p_migration_cost_existing: float = -0.05
    p_terminate: float = -1.0
    step_reward: float = 0.0

    def validate(self) -> None:
        if not self.r_honey_trap > self.r_isolate_compromised:
            raise ConfigError(
                "rewards.honey_trap must exceed rewards.isolate_compromised "
                f"({self.r_honey_trap!r} vs {self.r_isolate_compromised!r})"
            )
        for name in ("p_wrong_action", "p_migration_cost_new", "p_migration_cost_existing", "p_terminate"):
            if getattr(self, name) > 0:
                raise ConfigError(f"rewards.{name} is a penalty and must be <= 0")
        if self.p_migration_cost_new >= self.p_migration_cost_existing:
            raise ConfigError(
                "rewards.p_migration_cost_new must cost more than p_migration_cost_existing"
            )


# --- blue actions --------------------------------------------------------------


@dataclass(frozen=True)
class NoOp:
    pass


@dataclass(frozen=True)
class Isolate:
    host: HostId


@dataclass(frozen=True)
class MigrateNew:
    host: HostId


@dataclass(frozen=True)
class MigrateExisting:
    host: HostId
    net: Optional[int] = None  # None = lowest-id existing honey net


@dataclass(frozen=True)
class Terminate:
    pass


BlueAction = Union[NoOp, Isolate, MigrateNew, MigrateExisting, Terminate]


def action_space_size(n_hosts: int) -> int:
    return 2 + 3 * n_hosts


def decode_action_index(index: int, host_ids: tuple[HostId, ...]) -> BlueAction:
    n = action_space_size(len(host_ids))
    if not isinstance(index, int) or isinstance(index, bool) or not (0 <= index < n):
        raise InvalidActionError(f"action index {index!r} out of range [0, {n})")
    if index == 0:
        return NoOp()
    if index == 1:
        return Terminate()
    slot, variant = divmod(index - 2, 3)
    host = host_ids[slot]
    if variant == 0:
        return Isolate(host)
    if variant == 1:
        return MigrateNew(host)
    return MigrateExisting(host)


def action_names(host_ids: tuple[HostId, ...]) -> list[str]:
    names = ["noop", "terminate"]
    for h in host_ids:
        names += [f"isolate:{h}", f"migrate_new:{h}", f"migrate_existing:{h}"]
    return names


# --- configuration ---------------------------------------------------------------


@dataclass(frozen=True)
class DeceptionParams:
    """Attack hyperparameters, settable under the config `deception` block."""

    budget: int = 3
    cem_population: int = 64
    cem_elite: int = 8
    cem_iterations: int = 20
    n_particles: int = 300
    staleness: float = 0.25
    replan_horizon: int = 4
    objective: str = "degrade"
    program: str = "gray_like_traffic"
    likelihood_floor: float = 0.05
    gamma: float = 0.99

    def validate(self) -> None:
        if self.budget < 0:
            raise ConfigError("deception.budget must be >= 0")
        for name in ("cem_population", "cem_iterations", "n_particles", "replan_horizon"):
            if getattr(self, name) < 1:
                raise ConfigError(f"deception.{name} must be >= 1")
        if not (1 <= self.cem_elite <= self.cem_population):
            raise ConfigError("deception.cem_elite must be in [1, cem_population]")
        if not (0.0 < self.staleness <= 10.0):
            raise ConfigError("deception.staleness must be in (0, 10]")
        if self.objective not in ("degrade", "induce"):
            raise ConfigError(f"deception.objective must be degrade|induce, got {self.objective!r}")
        if self.likelihood_floor <= 0:
            raise ConfigError("deception.likelihood_floor must be positive")
        if not (0.0 < self.gamma <= 1.0):
            raise ConfigError("deception.gamma must be in (0, 1]")


@dataclass(frozen=True)
class GameConfig:
    topology: TopologySpec = TopologySpec()
    red_goal: str = "exfiltrate_cjs"
    red_mode: str = "traditional"
    gray_specs: tuple[GrayAppSpec, ...] = ()
    max_steps: int = 100
    reward_params: RewardParams = RewardParams()
    seed: int = 0
    deception: DeceptionParams = DeceptionParams()

    def validate(self) -> None:
        self.topology.validate()
        if self.red_goal not in RED_GOALS:
            raise ConfigError(f"red.goal must be one of {RED_GOALS}, got {self.red_goal!r}")
        if self.red_mode not in RED_MODES:
            raise ConfigError(f"red.mode must be one of {RED_MODES}, got {self.red_mode!r}")
        for spec in self.gray_specs:
            spec.validate(self.topology.n_hosts)
        if not isinstance(self.max_steps, int) or self.max_steps < 1:
            raise ConfigError(f"game.max_steps must be a positive integer, got {self.max_steps!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not (0 <= self.seed < 2**64):
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        self.reward_params.validate()
        self.deception.validate()


# --- episode ---------------------------------------------------------------------


@dataclass
class StepResult:
    obs: ObservationMatrix
    reward: float
    done: bool
    termination: Optional[str]
    info: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.done != (self.termination is not None):
            raise ContractViolationError("done must hold exactly when a termination is present")


class _TraditionalRed:
    """One planned action per step; the drivers share a small protocol:
    begin_step / next_action / feedback, with the engine owning execution."""

    actions_per_step = 1

    def begin_step(self) -> None:
        pass

    def next_action(self, episode: "EpisodeState"):
        return red_plan_step(episode.belief, episode.config.red_goal, episode.rng_red)

    def feedback(self, obs: ObservationMatrix) -> None:
        pass


@dataclass
class EpisodeState:
    config: GameConfig
    net: NetworkState
    belief: RedBelief
    rng_gray: np.random.Generator
    rng_red: np.random.Generator
    foothold: HostId
    base_host_ids: tuple[HostId, ...]
    red_driver: object
    event_log: list[tuple[int, TraceEvent]] = field(default_factory=list)
    done: bool = False
    termination: Optional[str] = None
    total_reward: float = 0.0

    @property
    def step_index(self) -> int:
        return self.net.step_count


def observe(events, episode: EpisodeState) -> ObservationMatrix:
    """Count one step's events into the episode's fixed host rows."""
    return ObservationMatrix(
        host_ids=episode.base_host_ids,
        counts=count_events(events, episode.base_host_ids),
    )


def reward(
    state: NetworkState,
    action: BlueAction,
    events,
    termination: Optional[str],
    params: RewardParams,
) -> float:
    """Decomposable reward: step + action component + terminal component.

    `state` is the network the action acted on (pre-application); containment
    bonuses require the acted-on host to carry a RAT and the action to change
    its containment, otherwise the wrong-action penalty applies. Migration
    fees are charged on every migrate action.
    """
    r = params.step_reward
    if isinstance(action, Isolate):
        host = state.host(action.host)
        if host.rat != RAT_NONE and action.host not in state.isolated:
            r += params.r_isolate_compromised
        else:
            r += params.p_wrong_action
    elif isinstance(action, (MigrateNew, MigrateExisting)):
        host = state.host(action.host)
        if isinstance(action, MigrateNew):
            r += params.p_migration_cost_new
        else:
            r += params.p_migration_cost_existing
        if host.rat != RAT_NONE and state.honey_net_of(action.host) is None:
            r += params.r_honey_trap
        else:
            r += params.p_wrong_action
    if termination == "red_goal_achieved":
        r += params.r_real_exfil
    elif termination == "red_believes_achieved":
        r += params.r_fake_exfil
    elif termination == "blue_terminated":
        r += params.p_terminate
    return r


def reset(
    config: GameConfig, policy_probe: Optional[Callable[[ObservationMatrix], np.ndarray]] = None
) -> tuple[EpisodeState, ObservationMatrix]:
    """Start an episode; returns the episode and the all-zero first observation."""
    config.validate()
    ss = np.random.SeedSequence(config.seed)
    net_ss, gray_ss, red_ss = ss.spawn(3)
    net = generate_network(config.topology, np.random.Generator(np.random.PCG64(net_ss)))
    foothold = next(h for h in sorted(net.hosts) if net.hosts[h].rat != RAT_NONE)
    base_host_ids = tuple(sorted(net.hosts))
    if config.red_mode == "traditional":
        driver: object = _TraditionalRed()
    else:
        from .deception import DeceptionDriver  # local import breaks the cycle

        driver = DeceptionDriver(
            params=config.deception,
            reward_params=config.reward_params,
            host_ids=base_host_ids,
            goal=config.red_goal,
            probe=policy_probe,
        )
    episode = EpisodeState(
        config=config,
        net=net,
        belief=initial_red_belief(net, foothold),
        rng_gray=np.random.Generator(np.random.PCG64(gray_ss)),
        rng_red=np.random.Generator(np.random.PCG64(red_ss)),
        foothold=foothold,
        base_host_ids=base_host_ids,
        red_driver=driver,
    )
    return episode, ObservationMatrix.zeros(base_host_ids)


def _resolve_blue(episode: EpisodeState, action: BlueAction) -> BlueAction:
    """Validate ids and resolve MigrateExisting's default net before any change."""
    net = episode.net
    if isinstance(action, (Isolate, MigrateNew)):
        net.host(action.host)
        return action
    if isinstance(action, MigrateExisting):
        net.host(action.host)
        if action.net is None:
            nets = sorted(net.honey_nets)
            if nets:
                return MigrateExisting(action.host, nets[0])
            return MigrateNew(action.host)  # no net to join yet: charged as new
        if action.net not in net.honey_nets:
            raise InvalidActionError(f"unknown honey net id {action.net!r}")
        return action
    if isinstance(action, (NoOp, Terminate)):
        return action
    raise InvalidActionError(f"unknown blue action {action!r}")


def step(episode: EpisodeState, action: BlueAction) -> StepResult:
    """Advance one turn: blue, then gray, then red; then observe/score/adjudicate."""
    if episode.done:
        raise EpisodeFinishedError("episode already finished; reset to play again")
    resolved = _resolve_blue(episode, action)
    pre_state = episode.net

    warnings: list[str] = []
    if isinstance(resolved, Isolate):
        episode.net = isolate_host(episode.net, resolved.host)
    elif isinstance(resolved, MigrateNew):
        episode.net, _ = migrate_to_honey(episode.net, resolved.host, "new")
    elif isinstance(resolved, MigrateExisting):
        if episode.net.honey_net_of(resolved.host) is not None:
            warnings.append(f"host {resolved.host} already lives in a honey net; no-op")
        episode.net, _ = migrate_to_honey(episode.net, resolved.host, resolved.net)

    gray_events = gray_step(episode.config.gray_specs, episode.net, episode.rng_gray)

    # Red phase: the driver hands out actions one at a time so its planning
    # always sees the belief as updated by the actions already executed.
    # Chaff (GrayLike / FrustrateGray) may fill the whole per-step allowance;
    # any other action ends the phase, so goal progress is one action a step.
    driver = episode.red_driver
    driver.begin_step()
    red_actions: list = []
    red_events: list[TraceEvent] = []
    outcomes: list[RedOutcome] = []
    for _ in range(max(1, driver.actions_per_step)):
        ra = driver.next_action(episode)
        if ra is None:
            break
        episode.net, outcome, evs = apply_red_action(episode.net, ra, episode.rng_red)
        episode.belief = red_update_belief(episode.belief, ra, outcome)
        red_actions.append(ra)
        red_events.extend(evs)
        outcomes.append(outcome)
        if outcome.goal_achieved or outcome.fake_goal:
            break
        if not isinstance(ra, (GrayLike, FrustrateGray)):
            break

    step_idx = episode.net.step_count
    events = gray_events + red_events
    episode.event_log.extend((step_idx, e) for e in events)
    obs = observe(events, episode)

    termination: Optional[str] = None
    if isinstance(resolved, Terminate):
        termination = "blue_terminated"
    elif any(o.goal_achieved for o in outcomes):
        termination = "red_goal_achieved"
    elif any(o.fake_goal for o in outcomes):
        termination = "red_believes_achieved"
    elif any(isinstance(ra, Concede) for ra in red_actions):
        termination = "red_conceded"
    elif step_idx + 1 >= episode.config.max_steps:
        termination = "timeout"

    r = reward(pre_state, resolved, events, termination, episode.config.reward_params)
    episode.net = replace(episode.net, step_count=step_idx + 1)
    episode.done = termination is not None
    episode.termination = termination
    episode.total_reward += r
    episode.red_driver.feedback(obs)

    info = {
        "step": step_idx,
        "blue_action": resolved,
        "red_actions": red_actions,
        "outcomes": outcomes,
        "events": events,
        "warnings": warnings,
    }
    return StepResult(obs=obs, reward=r, done=episode.done, termination=termination, info=info)


def episode_seed(base_seed: int, index: int) -> int:
    """Stable per-episode seed derivation used by every multi-episode runner."""
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1, np.uint64)[0])


@dataclass
class EpisodeRecord:
    seed: int
    total_reward: float
    length: int
    termination: str
    wall_clock_ms: float


def play_episode(
    config: GameConfig,
    choose: Callable[[ObservationMatrix, EpisodeState], BlueAction],
    policy_probe=None,
) -> EpisodeRecord:
    """Roll one episode to termination under a blue action chooser."""
    t0 = time.perf_counter()
    episode, obs = reset(config, policy_probe=policy_probe)
    steps = 0
    while not episode.done:
        result = step(episode, choose(obs, episode))
        obs = result.obs
        steps += 1
    dt_ms = (time.perf_counter() - t0) * 1000.0
    assert episode.termination is not None
    return EpisodeRecord(
        seed=config.seed,
        total_reward=episode.total_reward,
        length=steps,
        termination=episode.termination,
        wall_clock_ms=dt_ms,
    )

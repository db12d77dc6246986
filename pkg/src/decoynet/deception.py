"""Observation-space attack for the red agent.

Three stages, all indirect — no API here ever writes an observation:

1. pick a target observation that steers the defender policy badly
   (derivative-free cross-entropy search over the feasible delta lattice),
2. infer which gray-like action sequences would most plausibly produce that
   observation (posterior trace inference with the step's real counts as a
   Poisson base rate),
3. execute the inferred chaff, interleaved with the traditional attack plan
   so goal progress continues under cover.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .agents import (
    FrustrateGray,
    GRAY_EVENT_KINDS,
    GrayLike,
    KIND_SERVICE,
    Concede,
    RedAction,
    RedBelief,
    ReconAggressive,
    ReconQuiet,
    red_plan_step,
)
from .behavior import (
    GenerativeProgram,
    TraceEvent,
    WeightedTraceSet,
    make_program,
    poisson_feature_likelihood,
    posterior_traces,
)
from .errors import (
    ConfigError,
    ContractViolationError,
    DegeneratePosteriorError,
    ProgramError,
)
from .game import (
    DeceptionParams,
    N_FEATURES,
    ObservationMatrix,
    RewardParams,
    count_events,
)
from .netmodel import HostId

PolicyProbe = Callable[[ObservationMatrix], np.ndarray]

# Columns the adversary can push upward, and through which mechanism. Traffic
# columns rise only at hosts the attacker controls (GrayLike origin needs a
# RAT); failure columns rise at any known host via deliberately failing
# gray-likes, or via FrustrateGray on a controlled host. Recon columns and
# content searches stay honest.
_TRAFFIC_COLS = (0, 1, 2, 3)
_FAILURE_COLS = (6, 7, 8, 9)
_FAILURE_COL_SERVICE = {6: "ssh", 7: "http", 8: "amqp", 9: "ssh"}


@dataclass(frozen=True)
class AdversarialObjective:
    """Scores a policy's action distribution from the attacker's seat.

    `values[i]` is the attacker's reward for the defender playing action i —
    for degrade mode the negated defender reward against the attacker's
    believed ground truth, for induce mode a target action distribution.
    """

    mode: str
    values: np.ndarray
    gamma: float = 0.99

    def __post_init__(self) -> None:
        if self.mode not in ("degrade", "induce"):
            raise ConfigError(f"objective mode must be degrade|induce, got {self.mode!r}")
        if not (0.0 < self.gamma <= 1.0):
            raise ConfigError(f"objective gamma must be in (0, 1], got {self.gamma!r}")
        if self.mode == "induce":
            v = self.values
            if (v < 0).any() or abs(float(v.sum()) - 1.0) > 1e-9:
                raise ConfigError("induce-mode target must be a normalized distribution")

    def score(self, action_dist: np.ndarray) -> float:
        if action_dist.shape != self.values.shape:
            raise ContractViolationError(
                f"action distribution length {action_dist.shape} does not match "
                f"objective over {self.values.shape} actions"
            )
        return float(action_dist @ self.values)


def degrade_objective(
    belief: RedBelief,
    host_ids: tuple[HostId, ...],
    reward_params: RewardParams,
    gamma: float = 0.99,
) -> AdversarialObjective:
    """Attacker reward = minus the defender's one-step reward, judged against
    the attacker's belief of which hosts carry its RATs."""
    rats = belief.rat_hosts()
    p = reward_params
    values = [-p.step_reward, -p.p_terminate]
    for h in host_ids:
        hot = h in rats
        values.append(-(p.r_isolate_compromised if hot else p.p_wrong_action))
        values.append(-(p.p_migration_cost_new + (p.r_honey_trap if hot else p.p_wrong_action)))
        values.append(
            -(p.p_migration_cost_existing + (p.r_honey_trap if hot else p.p_wrong_action))
        )
    return AdversarialObjective(mode="degrade", values=np.array(values, dtype=float), gamma=gamma)


def induce_objective(target_dist: np.ndarray, gamma: float = 0.99) -> AdversarialObjective:
    return AdversarialObjective(
        mode="induce", values=np.asarray(target_dist, dtype=float), gamma=gamma
    )


@dataclass(frozen=True)
class FeasibleObservationSet:
    """Upward per-cell delta bounds around a base observation, plus a total
    per-step L1 budget. Cells outside the adversary's reach have bound 0."""

    base: ObservationMatrix
    bounds: np.ndarray  # int64, same shape as base.counts
    budget: int

    def __post_init__(self) -> None:
        if self.bounds.shape != self.base.counts.shape:
            raise ContractViolationError("delta bounds must match the base observation shape")
        if (self.bounds < 0).any() or self.budget < 0:
            raise ConfigError("delta bounds and budget must be non-negative")

    @classmethod
    def from_belief(
        cls, base: ObservationMatrix, belief: RedBelief, budget: int
    ) -> "FeasibleObservationSet":
        bounds = np.zeros_like(base.counts)
        rats = set(belief.rat_hosts())
        if budget > 0 and rats:
            index = {h: i for i, h in enumerate(base.host_ids)}
            for h in rats:
                if h in index:
                    for c in _TRAFFIC_COLS:
                        bounds[index[h], c] = budget
            for h, bh in belief.hosts.items():
                if h not in index:
                    continue
                for c in _FAILURE_COLS:
                    # a failure is producible here only by firing a kind the
                    # host can't serve, or by frustrating a service we own
                    if _FAILURE_COL_SERVICE[c] not in bh.services or h in rats:
                        bounds[index[h], c] = budget
        return cls(base=base, bounds=bounds, budget=budget)

    def clip(self, delta: np.ndarray) -> np.ndarray:
        """Project an integer delta into the feasible set (bounds, then L1)."""
        d = np.clip(np.rint(delta).astype(np.int64), 0, self.bounds)
        excess = int(d.sum()) - self.budget
        flat = d.reshape(-1)
        while excess > 0:
            i = int(np.argmax(flat))  # lowest flat index among maxima
            flat[i] -= 1
            excess -= 1
        return d

    def sample_uniform(self, rng: np.random.Generator) -> np.ndarray:
        """A random feasible delta: total mass then placement, cell by cell."""
        d = np.zeros_like(self.bounds)
        total = int(rng.integers(self.budget + 1))
        flat_d, flat_b = d.reshape(-1), self.bounds.reshape(-1)
        for _ in range(total):
            open_cells = np.flatnonzero(flat_d < flat_b)
            if open_cells.size == 0:
                break
            flat_d[int(rng.choice(open_cells))] += 1
        return d


def select_target_observation(
    policy_probe: PolicyProbe,
    objective: AdversarialObjective,
    feasible: FeasibleObservationSet,
    rng: np.random.Generator,
    *,
    population: int = 64,
    elite: int = 8,
    iterations: int = 20,
) -> ObservationMatrix:
    """Cross-entropy search for the feasible observation the probe scores worst.

    The zero delta and the best delta found so far are folded into every
    population, so the result never scores below the unmodified base and a
    zero budget returns the base exactly. A slice of each population is drawn
    uniformly from the feasible set, so the search keeps exploring after the
    Gaussian has contracted onto an early winner.
    """
    if not callable(policy_probe):
        raise ContractViolationError("policy_probe must be callable")
    base = feasible.base
    if feasible.budget == 0 or int(feasible.bounds.max()) == 0:
        return base.copy()

    def score_of(delta: np.ndarray) -> float:
        probe_obs = ObservationMatrix(base.host_ids, base.counts + delta)
        return objective.score(policy_probe(probe_obs))

    mask = feasible.bounds > 0
    k = int(mask.sum())
    mu = np.zeros(k)
    sigma = np.full(k, max(1.0, feasible.budget / 2.0))
    best = np.zeros_like(feasible.bounds)
    best_score = score_of(best)

    explore = max(2, population // 4)
    for _ in range(iterations):
        candidates = [np.zeros_like(best), best.copy()]
        candidates += [feasible.sample_uniform(rng) for _ in range(explore)]
        while len(candidates) < population:
            raw = np.zeros(feasible.bounds.shape, dtype=float)
            raw[mask] = rng.normal(mu, sigma)
            candidates.append(feasible.clip(raw))
        scored = sorted(
            ((score_of(d), d) for d in candidates),
            key=lambda sd: (-sd[0], sd[1].tobytes()),
        )
        if scored[0][0] > best_score:
            best_score, best = scored[0][0], scored[0][1].copy()
        elites = np.stack([d[mask] for _, d in scored[:elite]]).astype(float)
        mu = elites.mean(axis=0)
        sigma = elites.std(axis=0) + 0.1
    return ObservationMatrix(base.host_ids, base.counts + best)


@dataclass
class DeceptionPlan:
    """Target observation plus ranked candidate chaff sequences."""

    target: ObservationMatrix
    ranked: list[tuple[tuple[RedAction, ...], float]]
    intended: np.ndarray  # target minus base, the delta the chaff must produce
    trace_set: Optional[WeightedTraceSet] = None

    @property
    def actions(self) -> tuple[RedAction, ...]:
        return self.ranked[0][0] if self.ranked else ()


def _event_to_action(event: TraceEvent) -> RedAction:
    if event.kind in GRAY_EVENT_KINDS:
        return GrayLike(event)
    raise ProgramError(f"trace event kind {event.kind!r} has no deceptive action mapping")


def infer_deceptive_actions(
    program: GenerativeProgram,
    target: ObservationMatrix,
    n_particles: int,
    rng: np.random.Generator,
    *,
    base: Optional[ObservationMatrix] = None,
    floor: float = 0.05,
) -> DeceptionPlan:
    """Posterior over chaff traces that would plausibly yield `target`.

    The base observation enters the Poisson likelihood as an ambient rate, so
    the traces only have to explain the delta, not the whole matrix.
    """
    base_counts = np.zeros_like(target.counts) if base is None else base.counts
    likelihood = poisson_feature_likelihood(
        lambda evs: count_events(evs, target.host_ids),
        base=base_counts.astype(float),
        floor=floor,
    )
    trace_set = posterior_traces(
        program, {}, target.counts.astype(float), n_particles, rng, likelihood=likelihood
    )
    ranked = [
        (tuple(_event_to_action(e) for e in trace.events), weight)
        for trace, weight in trace_set.particles
    ]
    return DeceptionPlan(
        target=target,
        ranked=ranked,
        intended=target.counts - base_counts,
        trace_set=trace_set,
    )


def _chaff_menu(belief: RedBelief, host_ids: tuple[HostId, ...]) -> tuple[TraceEvent, ...]:
    """Every gray-shaped event the attacker could emit right now, with the
    success bit predicted from its own belief of the target's services."""
    live = set(host_ids)
    actors = sorted(h for h in belief.rat_hosts() if h in live)
    targets = sorted(belief.hosts)
    menu = []
    for actor in actors:
        for kind in sorted(GRAY_EVENT_KINDS):
            for t in targets:
                if t == actor:
                    continue
                ok = KIND_SERVICE[kind] in belief.hosts[t].services
                menu.append(TraceEvent(actor=actor, kind=kind, target=t, success=ok))
    return tuple(menu)


def _complete_signature(
    delta: np.ndarray, belief: RedBelief, host_ids: tuple[HostId, ...]
) -> np.ndarray:
    """Fold chaff side effects into an intended delta.

    A doomed request that lands a failure count at its target also counts at
    the emitting host's traffic column. The CEM picks cells by probe score
    alone, so without this completion the inference sees those origin counts
    as unexplained mismatches and ranks the empty trace first.
    """
    index = {h: i for i, h in enumerate(host_ids)}
    live_rats = sorted(h for h in belief.rat_hosts() if h in index)
    if not live_rats:
        return delta
    out = delta.copy()
    actor_row = index[live_rats[0]]
    for i, c in zip(*np.nonzero(delta)):
        col = int(c)
        if col not in _FAILURE_COLS:
            continue
        bh = belief.hosts.get(host_ids[int(i)])
        if bh is not None and _FAILURE_COL_SERVICE[col] in bh.services:
            continue  # frustrated gray traffic produces these, not our own requests
        out[actor_row, col - 6] += delta[int(i), col]
    return out


def _frustrate_supplement(
    belief: RedBelief, intended: np.ndarray, host_ids: tuple[HostId, ...]
) -> list[FrustrateGray]:
    """Failure-column deltas at controlled hosts whose service the attacker
    believes is healthy can only come from sabotaging that service."""
    out: list[FrustrateGray] = []
    seen: set[tuple[HostId, str]] = set()
    index = {h: i for i, h in enumerate(host_ids)}
    for h in sorted(belief.rat_hosts()):
        if h not in index or h not in belief.hosts:
            continue
        for col, service in _FAILURE_COL_SERVICE.items():
            if intended[index[h], col] <= 0:
                continue
            if service in belief.hosts[h].services and (h, service) not in seen:
                seen.add((h, service))
                out.append(FrustrateGray(host=h, service=service))
    return out


def _quieten(action: RedAction) -> RedAction:
    """The deceptive attacker never shows aggressive recon."""
    if isinstance(action, ReconAggressive):
        return ReconQuiet(source=action.source)
    return action


@dataclass
class PlanState:
    """Mutable state threaded through deceptive_red_step calls."""

    params: DeceptionParams
    reward_params: RewardParams
    host_ids: tuple[HostId, ...]
    probe: Optional[PolicyProbe] = None
    queue: list[RedAction] = field(default_factory=list)
    plan: Optional[DeceptionPlan] = None
    base_counts: Optional[np.ndarray] = None
    expected: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None
    intended_l1: int = 0
    stale: bool = False
    steps_since_replan: int = 0
    replanned_this_step: bool = False

    def __post_init__(self) -> None:
        if self.base_counts is None:
            self.base_counts = np.zeros((len(self.host_ids), N_FEATURES), dtype=np.int64)

    def begin_step(self) -> None:
        self.replanned_this_step = False
        self.steps_since_replan += 1

    def observe_feedback(self, obs: ObservationMatrix) -> None:
        if self.expected is not None and self.mask is not None and self.intended_l1 > 0:
            drift = int(np.abs(obs.counts - self.expected)[self.mask].sum())
            if drift > self.params.staleness * self.intended_l1:
                self.stale = True
        self.base_counts = obs.counts.copy()


def _uniform_probe(n_actions: int) -> PolicyProbe:
    def probe(obs: ObservationMatrix) -> np.ndarray:
        return np.full(n_actions, 1.0 / n_actions)

    return probe


def _replan(state: PlanState, belief: RedBelief, rng: np.random.Generator) -> None:
    params = state.params
    base = ObservationMatrix(state.host_ids, state.base_counts.copy())
    feasible = FeasibleObservationSet.from_belief(base, belief, params.budget)
    if params.objective == "degrade":
        objective = degrade_objective(belief, state.host_ids, state.reward_params, params.gamma)
    else:
        # induce mode steers the defender toward inaction
        n_actions = 2 + 3 * len(state.host_ids)
        target_dist = np.zeros(n_actions)
        target_dist[0] = 1.0
        objective = induce_objective(target_dist, params.gamma)
    probe = state.probe if state.probe is not None else _uniform_probe(len(objective.values))
    target = select_target_observation(
        probe,
        objective,
        feasible,
        rng,
        population=params.cem_population,
        elite=params.cem_elite,
        iterations=params.cem_iterations,
    )
    delta = target.counts - base.counts
    intended = _complete_signature(delta, belief, state.host_ids)
    infer_target = ObservationMatrix(base.host_ids, base.counts + intended)
    plan = DeceptionPlan(target=infer_target, ranked=[], intended=intended)
    if intended.sum() > 0:
        menu = _chaff_menu(belief, state.host_ids)
        if menu:
            program = make_program(
                params.program,
                events=menu,
                max_events=max(1, params.budget),
                continue_prob=0.7,
            )
            try:
                plan = infer_deceptive_actions(
                    program,
                    infer_target,
                    params.n_particles,
                    rng,
                    base=base,
                    floor=params.likelihood_floor,
                )
            except DegeneratePosteriorError:
                plan = DeceptionPlan(target=infer_target, ranked=[], intended=intended)
    frustrates = _frustrate_supplement(belief, delta, state.host_ids)
    queue = (list(frustrates) + list(plan.actions))[: max(0, params.budget)]
    state.plan = plan
    state.queue = queue
    state.expected = base.counts + intended
    state.mask = feasible.bounds > 0
    state.intended_l1 = int(intended.sum())
    state.stale = False
    state.steps_since_replan = 0
    state.replanned_this_step = True


def deceptive_red_step(
    belief: RedBelief, goal: str, plan_state: PlanState, rng: np.random.Generator
) -> RedAction:
    """One deceptive action: next chaff from the plan if any, replanning when
    the plan is spent, stale, or past its horizon (at most once per step);
    otherwise fall through to the traditional planner so the goal advances."""
    if not belief.rat_hosts():
        return Concede()
    ps = plan_state
    if ps.queue:
        if ps.stale or ps.steps_since_replan >= ps.params.replan_horizon:
            ps.queue.clear()  # discard a plan the world has drifted away from
        else:
            return ps.queue.pop(0)
    if ps.params.budget > 0 and not ps.replanned_this_step:
        _replan(ps, belief, rng)
        if ps.queue:
            return ps.queue.pop(0)
    return _quieten(red_plan_step(belief, goal, rng))


class DeceptionDriver:
    """Engine-side adapter owning the PlanState across an episode."""

    def __init__(
        self,
        params: DeceptionParams,
        reward_params: RewardParams,
        host_ids: tuple[HostId, ...],
        goal: str,
        probe: Optional[PolicyProbe] = None,
    ) -> None:
        self.goal = goal
        self.state = PlanState(
            params=params, reward_params=reward_params, host_ids=host_ids, probe=probe
        )

    @property
    def actions_per_step(self) -> int:
        return max(1, self.state.params.budget)

    def begin_step(self) -> None:
        self.state.begin_step()

    def next_action(self, episode) -> RedAction:
        return deceptive_red_step(episode.belief, self.goal, self.state, episode.rng_red)

    def feedback(self, obs: ObservationMatrix) -> None:
        self.state.observe_feedback(obs)

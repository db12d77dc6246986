"""Red and gray agents: belief tracking, rule-layered planning, ground-truth
action application, and Poisson background traffic.

apply_red_action is the only writer of red-caused state; every state change it
makes is witnessed by at least one emitted event (quiet-recon knowledge gains
excepted by design).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .behavior import TraceEvent
from .errors import ConfigError, ContractViolationError, InvalidActionError
from .netmodel import (
    RAT_BASIC,
    RAT_ELEVATED,
    RAT_NONE,
    SERVICES,
    Host,
    HostId,
    NetworkState,
    effective_neighbors,
    reachable,
)

# Belief tag vocabulary.
TAG_RAT = "RAT"
TAG_ELEVATED = "ElevatedRAT"
TAG_DISCOVERED_BROKER = "AdversaryDiscoveredAMQBroker"
TAG_DECLARED_BROKER = "AdversaryDeclaredCompromisedAMQBroker"
TAG_DISCOVERED_LDAP = "AdversaryDiscoveredLDAPServer"
TAG_DISCOVERED_SPECIAL = "AdversaryDiscoveredSpecialHost"
TAG_DECLARED_LDAP = "AdversaryDeclaredCompromisedLDAPServer"
TAG_DECLARED_SPECIAL = "AdversaryDeclaredCompromisedSpecialHost"
TAG_VOCABULARY = frozenset(
    {
        TAG_RAT,
        TAG_ELEVATED,
        TAG_DISCOVERED_BROKER,
        TAG_DECLARED_BROKER,
        TAG_DISCOVERED_LDAP,
        TAG_DISCOVERED_SPECIAL,
        TAG_DECLARED_LDAP,
        TAG_DECLARED_SPECIAL,
    }
)

GOAL_EXFILTRATE = "exfiltrate_cjs"
GOAL_LDAP_USER = "create_ldap_user"
GOAL_DDOS_BROKER = "ddos_amqp_broker"
RED_GOALS = (GOAL_EXFILTRATE, GOAL_LDAP_USER, GOAL_DDOS_BROKER)

GRAY_APP_KINDS = ("amqp_logger", "rpc_microservice", "ssh_transfer")

# Traffic kinds a gray agent can emit; the only kinds GrayLike may carry.
GRAY_EVENT_KINDS = frozenset({"ssh", "scp", "http_rest", "amqp"})
KIND_SERVICE = {"ssh": "ssh", "scp": "ssh", "http_rest": "http", "amqp": "amqp", "lateral_move": "ssh"}

# Quiet probes that add nothing before the planner escalates to aggressive.
QUIET_MISS_LIMIT = 2

_DDOS_EVENTS_PER_SOURCE = 2


# --- red actions -------------------------------------------------------------


@dataclass(frozen=True)
class ReconQuiet:
    source: HostId


@dataclass(frozen=True)
class ReconAggressive:
    source: HostId


@dataclass(frozen=True)
class LateralMove:
    source: HostId
    target: HostId


@dataclass(frozen=True)
class ElevatePrivilege:
    host: HostId


@dataclass(frozen=True)
class SearchContent:
    host: HostId


@dataclass(frozen=True)
class Exfiltrate:
    host: HostId
    path: str


@dataclass(frozen=True)
class CreateLdapUser:
    host: HostId


@dataclass(frozen=True)
class DdosBroker:
    sources: tuple[HostId, ...]
    broker: HostId


@dataclass(frozen=True)
class Concede:
    pass


@dataclass(frozen=True)
class GrayLike:
    event: TraceEvent


@dataclass(frozen=True)
class FrustrateGray:
    host: HostId
    service: str


RedAction = Union[
    ReconQuiet,
    ReconAggressive,
    LateralMove,
    ElevatePrivilege,
    SearchContent,
    Exfiltrate,
    CreateLdapUser,
    DdosBroker,
    Concede,
    GrayLike,
    FrustrateGray,
]


# --- belief ------------------------------------------------------------------


@dataclass(frozen=True)
class HostView:
    """Red-visible attribute snapshot of one host."""

    id: HostId
    os: str
    os_version: str
    fqdn: str
    dns_domain: str
    ip: str
    ports: tuple[tuple[int, str], ...]
    services: frozenset[str]


def host_view(host: Host) -> HostView:
    return HostView(
        id=host.id,
        os=host.os,
        os_version=host.os_version,
        fqdn=host.fqdn,
        dns_domain=host.dns_domain,
        ip=host.ip,
        ports=host.ports,
        services=host.services,
    )


@dataclass
class BeliefHost:
    id: HostId
    os: Optional[str] = None
    os_version: Optional[str] = None
    fqdn: Optional[str] = None
    dns_domain: Optional[str] = None
    ip: Optional[str] = None
    ports: tuple[tuple[int, str], ...] = ()
    services: frozenset[str] = frozenset()
    file_paths: tuple[str, ...] = ()
    attacked_brokers: frozenset[HostId] = frozenset()
    tags: frozenset[str] = frozenset()
    # Planner bookkeeping; red_plan_step is stateless so it lives here.
    recon_done: bool = False
    quiet_misses: int = 0
    searched: bool = False

    def __post_init__(self) -> None:
        bad = self.tags - TAG_VOCABULARY
        if bad:
            raise ContractViolationError(f"unknown belief tags {sorted(bad)}")

    def clone(self) -> "BeliefHost":
        return replace(self)


@dataclass
class RedBelief:
    hosts: dict[HostId, BeliefHost] = field(default_factory=dict)
    adjacency: frozenset[tuple[HostId, HostId]] = frozenset()
    failed_moves: frozenset[tuple[HostId, HostId]] = frozenset()

    def clone(self) -> "RedBelief":
        return RedBelief(
            hosts={h: b.clone() for h, b in self.hosts.items()},
            adjacency=self.adjacency,
            failed_moves=self.failed_moves,
        )

    def rat_hosts(self) -> list[HostId]:
        return sorted(h for h, b in self.hosts.items() if TAG_RAT in b.tags)

    def known_neighbors(self, h: HostId) -> list[HostId]:
        out = set()
        for a, b in self.adjacency:
            if a == h:
                out.add(b)
            elif b == h:
                out.add(a)
        return sorted(out)


def initial_red_belief(state: NetworkState, foothold: HostId) -> RedBelief:
    view = host_view(state.host(foothold))
    entry = BeliefHost(
        id=foothold,
        os=view.os,
        os_version=view.os_version,
        fqdn=view.fqdn,
        dns_domain=view.dns_domain,
        ip=view.ip,
        ports=view.ports,
        services=view.services,
        tags=frozenset({TAG_RAT}),
    )
    return RedBelief(hosts={foothold: entry})


# --- outcomes ----------------------------------------------------------------


@dataclass(frozen=True)
class RedOutcome:
    """What the red orchestrator learns back from one executed action."""

    action: RedAction
    success: bool
    lost_contact: bool = False
    discovered: tuple[HostView, ...] = ()
    adjacency: tuple[tuple[HostId, HostId], ...] = ()
    rat_placed: Optional[HostId] = None
    elevated: Optional[HostId] = None
    searched_host: Optional[HostId] = None
    files: tuple[str, ...] = ()
    special: bool = False
    goal_achieved: bool = False
    fake_goal: bool = False
    unreachable: tuple[HostId, ...] = ()
    recon_complete: bool = False


# --- ground-truth application -------------------------------------------------


def _origin_of(action: RedAction) -> Optional[HostId]:
    if isinstance(action, (ReconQuiet, ReconAggressive)):
        return action.source
    if isinstance(action, LateralMove):
        return action.source
    if isinstance(action, (ElevatePrivilege, SearchContent, Exfiltrate, CreateLdapUser)):
        return action.host
    if isinstance(action, GrayLike):
        return action.event.actor
    if isinstance(action, FrustrateGray):
        return action.host
    return None  # Concede, DdosBroker (multi-source, handled separately)


def _require_rat(state: NetworkState, h: HostId, *, elevated: bool = False) -> Host:
    host = state.host(h)
    if host.rat == RAT_NONE:
        raise InvalidActionError(f"host {h} carries no RAT; action is malformed")
    if elevated and host.rat != RAT_ELEVATED:
        raise InvalidActionError(f"host {h} needs an elevated RAT for this action")
    return host


def _delivers(state: NetworkState, actor: HostId, target: HostId, kind: str) -> bool:
    service = KIND_SERVICE.get(kind)
    if not reachable(state, actor, target):
        return False
    if service is not None and not state.host(target).has_service(service):
        return False
    return True


def apply_red_action(
    state: NetworkState, action: RedAction, rng: np.random.Generator
) -> tuple[NetworkState, RedOutcome, list[TraceEvent]]:
    """Execute one red action against ground truth.

    Returns (new state, outcome for belief update, emitted events). Actions
    from isolated origins emit nothing and fail (isolation dominance).
    """
    if isinstance(action, Concede):
        return state, RedOutcome(action=action, success=True), []

    if isinstance(action, DdosBroker):
        return _apply_ddos(state, action)

    origin = _origin_of(action)
    assert origin is not None
    _require_rat(state, origin, elevated=isinstance(action, Exfiltrate))
    if origin in state.isolated:
        outcome = RedOutcome(
            action=action, success=False, lost_contact=True, unreachable=(origin,)
        )
        return state, outcome, []

    if isinstance(action, ReconQuiet):
        neighbors = effective_neighbors(state, origin)
        event = TraceEvent(actor=origin, kind="recon_quiet")
        if not neighbors:
            return state, RedOutcome(action=action, success=True), [event]
        pick = int(rng.choice(neighbors))
        outcome = RedOutcome(
            action=action,
            success=True,
            discovered=(host_view(state.host(pick)),),
            adjacency=((origin, pick),),
        )
        return state, outcome, [event]

    if isinstance(action, ReconAggressive):
        neighbors = effective_neighbors(state, origin)
        events = [TraceEvent(actor=origin, kind="recon_aggressive") for _ in neighbors]
        outcome = RedOutcome(
            action=action,
            success=True,
            discovered=tuple(host_view(state.host(v)) for v in neighbors),
            adjacency=tuple((origin, v) for v in neighbors),
            recon_complete=True,
        )
        return state, outcome, events

    if isinstance(action, LateralMove):
        target = state.host(action.target)
        ok = _delivers(state, origin, action.target, "lateral_move")
        event = TraceEvent(actor=origin, kind="lateral_move", target=action.target, success=ok)
        if not ok:
            unreachable = (action.target,) if not reachable(state, origin, action.target) else ()
            return state, RedOutcome(action=action, success=False, unreachable=unreachable), [event]
        if target.rat == RAT_NONE:
            state = state.with_host(replace(target, rat=RAT_BASIC))
        outcome = RedOutcome(
            action=action,
            success=True,
            rat_placed=action.target,
            adjacency=((origin, action.target),),
        )
        return state, outcome, [event]

    if isinstance(action, ElevatePrivilege):
        host = state.host(origin)
        if host.rat != RAT_ELEVATED:
            state = state.with_host(replace(host, rat=RAT_ELEVATED))
        event = TraceEvent(actor=origin, kind="ssh", target=origin, success=True)
        return state, RedOutcome(action=action, success=True, elevated=origin), [event]

    if isinstance(action, SearchContent):
        host = state.host(origin)
        special = host.crown_jewel or origin in state.fake_crown_jewels
        event = TraceEvent(actor=origin, kind="content_search")
        outcome = RedOutcome(
            action=action,
            success=True,
            searched_host=origin,
            files=host.file_paths,
            special=special,
        )
        return state, outcome, [event]

    if isinstance(action, Exfiltrate):
        host = state.host(origin)
        has_file = action.path in host.file_paths
        event = TraceEvent(actor=origin, kind="exfiltrate", target=origin, success=has_file)
        if not has_file:
            return state, RedOutcome(action=action, success=False), [event]
        if origin in state.fake_crown_jewels:
            state = replace(state, fake_exfiltrated=True)
            outcome = RedOutcome(action=action, success=True, fake_goal=True)
        elif host.crown_jewel:
            outcome = RedOutcome(action=action, success=True, goal_achieved=True)
        else:
            outcome = RedOutcome(action=action, success=True)
        return state, outcome, [event]

    if isinstance(action, CreateLdapUser):
        host = state.host(origin)
        ok = host.has_service("ldap")
        event = TraceEvent(actor=origin, kind="http_rest", target=origin, success=ok)
        if not ok:
            return state, RedOutcome(action=action, success=False), [event]
        state = replace(state, ldap_users=state.ldap_users | {origin})
        if host.honey:
            outcome = RedOutcome(action=action, success=True, fake_goal=True)
        else:
            outcome = RedOutcome(action=action, success=True, goal_achieved=True)
        return state, outcome, [event]

    if isinstance(action, GrayLike):
        ev = action.event
        if ev.kind not in GRAY_EVENT_KINDS:
            raise InvalidActionError(f"GrayLike cannot carry event kind {ev.kind!r}")
        state.host(ev.target if ev.target is not None else ev.actor)
        ok = ev.target is not None and _delivers(state, ev.actor, ev.target, ev.kind)
        event = replace(ev, success=ok)
        return state, RedOutcome(action=action, success=ok), [event]

    if isinstance(action, FrustrateGray):
        if action.service not in SERVICES:
            raise InvalidActionError(f"unknown service {action.service!r}")
        state = replace(state, frustrated=state.frustrated | {(origin, action.service)})
        event = TraceEvent(actor=origin, kind="frustrate", target=origin, success=True)
        return state, RedOutcome(action=action, success=True), [event]

    raise InvalidActionError(f"unknown red action {action!r}")


def _apply_ddos(
    state: NetworkState, action: DdosBroker
) -> tuple[NetworkState, RedOutcome, list[TraceEvent]]:
    broker = state.host(action.broker)
    active = []
    for s in action.sources:
        _require_rat(state, s)
        if s not in state.isolated:
            active.append(s)
    if not active:
        outcome = RedOutcome(
            action=action, success=False, lost_contact=True, unreachable=tuple(action.sources)
        )
        return state, outcome, []
    events = []
    delivered = False
    for s in active:
        ok = _delivers(state, s, action.broker, "amqp")
        delivered = delivered or ok
        for _ in range(_DDOS_EVENTS_PER_SOURCE):
            events.append(TraceEvent(actor=s, kind="amqp", target=action.broker, success=ok))
    if not delivered:
        outcome = RedOutcome(action=action, success=False, unreachable=(action.broker,))
        return state, outcome, events
    state = replace(state, ddosed_brokers=state.ddosed_brokers | {action.broker})
    if broker.honey:
        outcome = RedOutcome(action=action, success=True, fake_goal=True)
    else:
        outcome = RedOutcome(action=action, success=True, goal_achieved=True)
    return state, outcome, events


# --- gray agents --------------------------------------------------------------


@dataclass(frozen=True)
class GrayAppSpec:
    """One benign application: a kind, its participant hosts, a Poisson rate."""

    kind: str
    hosts: tuple[HostId, ...]
    rate: float

    def validate(self, n_hosts: Optional[int] = None) -> None:
        if self.kind not in GRAY_APP_KINDS:
            raise ConfigError(f"gray app kind must be one of {GRAY_APP_KINDS}, got {self.kind!r}")
        if len(self.hosts) < 2:
            raise ConfigError(f"gray app {self.kind!r} needs at least 2 hosts, got {self.hosts!r}")
        if len(set(self.hosts)) != len(self.hosts):
            raise ConfigError(f"gray app {self.kind!r} hosts must be distinct, got {self.hosts!r}")
        if self.rate < 0:
            raise ConfigError(f"gray app {self.kind!r} rate must be >= 0, got {self.rate!r}")
        if n_hosts is not None:
            bad = [h for h in self.hosts if not (0 <= h < n_hosts)]
            if bad:
                raise ConfigError(f"gray app {self.kind!r} references unknown hosts {bad}")


def _gray_success(state: NetworkState, actor: HostId, target: HostId, kind: str) -> bool:
    if (actor, KIND_SERVICE[kind]) in state.frustrated:
        return False
    return _delivers(state, actor, target, kind)


def gray_step(
    specs: tuple[GrayAppSpec, ...], state: NetworkState, rng: np.random.Generator
) -> list[TraceEvent]:
    """One step of benign traffic. Never changes state; only emits events."""
    events: list[TraceEvent] = []
    for spec in specs:
        n = int(rng.poisson(spec.rate))
        for _ in range(n):
            if spec.kind == "amqp_logger":
                hub = spec.hosts[0]
                sender = int(rng.choice(spec.hosts[1:]))
                kind, actor, target = "amqp", sender, hub
            elif spec.kind == "rpc_microservice":
                pair = rng.choice(len(spec.hosts), size=2, replace=False)
                actor, target = spec.hosts[int(pair[0])], spec.hosts[int(pair[1])]
                kind = "http_rest" if rng.random() < 0.5 else "amqp"
            else:  # ssh_transfer
                pair = rng.choice(len(spec.hosts), size=2, replace=False)
                actor, target = spec.hosts[int(pair[0])], spec.hosts[int(pair[1])]
                kind = "ssh" if rng.random() < 0.5 else "scp"
            ok = _gray_success(state, actor, target, kind)
            events.append(TraceEvent(actor=actor, kind=kind, target=target, success=ok))
    return events


# --- red planner ---------------------------------------------------------------


def _belief_ssh_open(b: BeliefHost) -> bool:
    return "ssh" in b.services and any(p == 22 and s == "open" for p, s in b.ports)


def red_plan_step(belief: RedBelief, goal: str, rng: np.random.Generator) -> RedAction:
    """First applicable rule of the layered plan:
    discover -> lateral -> elevate -> search -> goal action -> Concede.
    """
    if goal not in RED_GOALS:
        raise InvalidActionError(f"unknown red goal {goal!r}")
    rats = belief.rat_hosts()
    if not rats:
        return Concede()
    rat_set = set(rats)

    # discover: some foothold still has unscanned surroundings
    for h in rats:
        b = belief.hosts[h]
        if not b.recon_done:
            if b.quiet_misses >= QUIET_MISS_LIMIT:
                return ReconAggressive(h)
            return ReconQuiet(h) if rng.random() < 0.5 else ReconAggressive(h)

    # lateral: spread to a known, uncompromised, ssh-open neighbor
    for h in rats:
        for v in belief.known_neighbors(h):
            if v in rat_set or (h, v) in belief.failed_moves:
                continue
            nb = belief.hosts.get(v)
            if nb is None or TAG_RAT in nb.tags or not _belief_ssh_open(nb):
                continue
            return LateralMove(h, v)

    # elevate: root every foothold
    for h in rats:
        if TAG_ELEVATED not in belief.hosts[h].tags:
            return ElevatePrivilege(h)

    # search: inventory content on rooted hosts
    for h in rats:
        if not belief.hosts[h].searched:
            return SearchContent(h)

    # act on the goal
    if goal == GOAL_EXFILTRATE:
        for h in rats:
            b = belief.hosts[h]
            if TAG_ELEVATED in b.tags and TAG_DISCOVERED_SPECIAL in b.tags and b.file_paths:
                return Exfiltrate(h, b.file_paths[0])
    elif goal == GOAL_LDAP_USER:
        for h in rats:
            b = belief.hosts[h]
            if TAG_ELEVATED in b.tags and "ldap" in b.services and TAG_DECLARED_LDAP not in b.tags:
                return CreateLdapUser(h)
    else:  # GOAL_DDOS_BROKER
        attempted = frozenset().union(*(belief.hosts[h].attacked_brokers for h in rats))
        for h, b in sorted(belief.hosts.items()):
            if "amqp" in b.services and h not in attempted and h not in rat_set:
                return DdosBroker(sources=tuple(rats), broker=h)
        for h, b in sorted(belief.hosts.items()):
            if "amqp" in b.services and h not in attempted:
                return DdosBroker(sources=tuple(rats), broker=h)

    return Concede()


def _merge_view(b: BeliefHost, view: HostView) -> BeliefHost:
    tags = set(b.tags)
    if "amqp" in view.services:
        tags.add(TAG_DISCOVERED_BROKER)
    if "ldap" in view.services:
        tags.add(TAG_DISCOVERED_LDAP)
    return replace(
        b,
        os=view.os,
        os_version=view.os_version,
        fqdn=view.fqdn,
        dns_domain=view.dns_domain,
        ip=view.ip,
        ports=view.ports,
        services=view.services,
        tags=frozenset(tags),
    )


def red_update_belief(belief: RedBelief, action: RedAction, outcome: RedOutcome) -> RedBelief:
    """Fold one outcome into the belief. Discovery is monotone; only RAT tags
    are ever dropped (on loss of contact)."""
    if outcome.action != action:
        raise ContractViolationError(
            f"outcome reports action {outcome.action!r} but {action!r} was taken"
        )
    out = belief.clone()

    new_knowledge = False
    for view in outcome.discovered:
        existing = out.hosts.get(view.id)
        if existing is None:
            out.hosts[view.id] = _merge_view(BeliefHost(id=view.id), view)
            new_knowledge = True
        else:
            merged = _merge_view(existing, view)
            if (merged.services, merged.ports, merged.ip) != (
                existing.services,
                existing.ports,
                existing.ip,
            ):
                new_knowledge = True
            out.hosts[view.id] = merged
    if outcome.adjacency:
        pairs = {(min(a, b), max(a, b)) for a, b in outcome.adjacency}
        if not pairs <= set(out.adjacency):
            new_knowledge = True
        out.adjacency = out.adjacency | frozenset(pairs)

    for h in outcome.unreachable:
        b = out.hosts.get(h)
        if b is not None and (TAG_RAT in b.tags or TAG_ELEVATED in b.tags):
            out.hosts[h] = replace(b, tags=b.tags - {TAG_RAT, TAG_ELEVATED})

    if isinstance(action, ReconQuiet) and outcome.success:
        b = out.hosts[action.source]
        if new_knowledge:
            out.hosts[action.source] = replace(b, quiet_misses=0)
        else:
            misses = b.quiet_misses + 1
            # A quiet scan of an exhausted neighborhood: after enough misses the
            # planner escalates, and a red agent too stealthy to ever scan
            # aggressively declares the neighborhood mapped at twice that many.
            # An empty scan result exhausts it immediately.
            done = (not outcome.discovered and not outcome.adjacency) or (
                misses >= 2 * QUIET_MISS_LIMIT
            )
            out.hosts[action.source] = replace(b, quiet_misses=misses, recon_done=done)

    if isinstance(action, ReconAggressive) and outcome.recon_complete:
        b = out.hosts[action.source]
        out.hosts[action.source] = replace(b, recon_done=True, quiet_misses=0)

    if isinstance(action, LateralMove):
        if outcome.success and outcome.rat_placed is not None:
            b = out.hosts.get(outcome.rat_placed, BeliefHost(id=outcome.rat_placed))
            out.hosts[outcome.rat_placed] = replace(b, tags=b.tags | {TAG_RAT})
        elif not outcome.success:
            out.failed_moves = out.failed_moves | {(action.source, action.target)}

    if isinstance(action, ElevatePrivilege) and outcome.success:
        b = out.hosts[action.host]
        out.hosts[action.host] = replace(b, tags=b.tags | {TAG_RAT, TAG_ELEVATED})

    if isinstance(action, SearchContent) and outcome.success:
        b = out.hosts[action.host]
        tags = set(b.tags)
        if outcome.special:
            tags.add(TAG_DISCOVERED_SPECIAL)
            if TAG_ELEVATED in tags:
                tags.add(TAG_DECLARED_SPECIAL)
        out.hosts[action.host] = replace(
            b, searched=True, file_paths=outcome.files, tags=frozenset(tags)
        )

    if isinstance(action, CreateLdapUser) and outcome.success:
        b = out.hosts[action.host]
        out.hosts[action.host] = replace(b, tags=b.tags | {TAG_DECLARED_LDAP})

    if isinstance(action, DdosBroker):
        for s in action.sources:
            b = out.hosts.get(s)
            if b is not None:
                out.hosts[s] = replace(b, attacked_brokers=b.attacked_brokers | {action.broker})
        if outcome.success:
            b = out.hosts.get(action.broker)
            if b is not None:
                out.hosts[action.broker] = replace(b, tags=b.tags | {TAG_DECLARED_BROKER})

    # A failed reach from a live origin means the map changed: rescan.
    if not outcome.success and not outcome.lost_contact and outcome.unreachable:
        origin = _origin_of(action)
        if origin is not None and origin in out.hosts:
            b = out.hosts[origin]
            out.hosts[origin] = replace(b, recon_done=False, quiet_misses=0)

    return out

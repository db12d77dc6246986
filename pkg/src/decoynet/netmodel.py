"""Attributed-graph ground truth: hosts, links, isolation, and honey nets.

All operations are pure: they return new NetworkState values and never
mutate their inputs. Determinism contract: identical (spec, seed) pairs
produce identical states, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Union

import numpy as np

from .errors import ConfigError, InvalidActionError

HostId = int

OS_CHOICES = (("linux", ("5.15", "6.1", "6.8")), ("windows", ("10", "11", "2019")))
SERVICES = ("ssh", "http", "ftp", "amqp", "ldap")
SERVICE_PORTS = {"ssh": 22, "http": 80, "ftp": 21, "amqp": 5672, "ldap": 389}
TOPOLOGIES = ("star", "tree", "gnp")

RAT_NONE = "none"
RAT_BASIC = "rat"
RAT_ELEVATED = "elevated_rat"
RAT_LEVELS = (RAT_NONE, RAT_BASIC, RAT_ELEVATED)

# Abstract provisioning costs; the reward machine prices migrations separately.
MIGRATE_COST_NEW = 1.0
MIGRATE_COST_EXISTING = 0.5

# Fabricated hosts per new honey net, in addition to the fake crown jewel.
CHAFF_FAKES_PER_NET = 2

DEFAULT_SERVICE_MIX = {"ssh": 1.0, "http": 0.5, "ftp": 0.25, "amqp": 0.4, "ldap": 0.25}

CROWN_JEWEL_PATHS = ("/srv/vault/customer_records.db", "/srv/vault/keys.tar")
MUNDANE_PATHS = ("/var/log/syslog", "/home/ops/notes.txt")


@dataclass
class Host:
    """One machine with the attributes both sides reason over."""

    id: HostId
    os: str
    os_version: str
    fqdn: str
    dns_domain: str
    ip: str
    ports: tuple[tuple[int, str], ...]  # (port, "open" | "closed")
    services: frozenset[str]
    file_paths: tuple[str, ...]
    crown_jewel: bool = False
    honey: bool = False  # fabricated decoy host, never a real crown jewel
    rat: str = RAT_NONE

    def open_ports(self) -> frozenset[int]:
        return frozenset(p for p, state in self.ports if state == "open")

    def has_service(self, service: str) -> bool:
        return service in self.services and SERVICE_PORTS[service] in self.open_ports()


@dataclass
class NetworkState:
    """Value-type snapshot of the whole network."""

    hosts: dict[HostId, Host]
    edges: frozenset[tuple[HostId, HostId]]  # canonical (lo, hi) pairs
    honey_nets: dict[int, frozenset[HostId]] = field(default_factory=dict)
    isolated: frozenset[HostId] = frozenset()
    fake_crown_jewels: frozenset[HostId] = frozenset()
    step_count: int = 0
    # Effects of red actions that must outlive the acting step.
    frustrated: frozenset[tuple[HostId, str]] = frozenset()
    ldap_users: frozenset[HostId] = frozenset()
    ddosed_brokers: frozenset[HostId] = frozenset()
    fake_exfiltrated: bool = False

    def host(self, h: HostId) -> Host:
        try:
            return self.hosts[h]
        except KeyError:
            raise InvalidActionError(f"unknown host id {h!r}") from None

    def honey_net_of(self, h: HostId) -> Optional[int]:
        for net_id, members in self.honey_nets.items():
            if h in members:
                return net_id
        return None

    def with_host(self, host: Host) -> "NetworkState":
        hosts = dict(self.hosts)
        hosts[host.id] = host
        return replace(self, hosts=hosts)


@dataclass(frozen=True)
class TopologySpec:
    """Seed-independent structural parameters for network generation."""

    n_hosts: int = 10
    topology: str = "star"
    gnp_p: float = 0.3
    n_crown_jewels: int = 1
    service_mix: tuple[tuple[str, float], ...] = tuple(sorted(DEFAULT_SERVICE_MIX.items()))

    def mix(self) -> dict[str, float]:
        return dict(self.service_mix)

    def validate(self) -> None:
        if not isinstance(self.n_hosts, int) or self.n_hosts < 1:
            raise ConfigError(f"topology.n_hosts must be a positive integer, got {self.n_hosts!r}")
        if self.topology not in TOPOLOGIES:
            raise ConfigError(
                f"topology.kind must be one of {TOPOLOGIES}, got {self.topology!r}"
            )
        if self.topology == "gnp" and not (0.0 < self.gnp_p <= 1.0):
            raise ConfigError(f"topology.gnp_p must be in (0, 1], got {self.gnp_p!r}")
        if not isinstance(self.n_crown_jewels, int) or self.n_crown_jewels < 1:
            raise ConfigError(
                f"topology.n_crown_jewels must be a positive integer, got {self.n_crown_jewels!r}"
            )
        if self.n_crown_jewels >= self.n_hosts:
            # The foothold is always placed off the crown jewels, so at least
            # one non-jewel host must exist.
            raise ConfigError(
                "topology.n_crown_jewels must be < n_hosts: the initial foothold "
                "and a crown jewel cannot coincide"
            )
        for name, p in self.service_mix:
            if name not in SERVICES:
                raise ConfigError(f"topology.service_mix has unknown service {name!r}")
            if not (0.0 <= p <= 1.0):
                raise ConfigError(f"topology.service_mix.{name} must be in [0, 1], got {p!r}")


def _edge(a: HostId, b: HostId) -> tuple[HostId, HostId]:
    return (a, b) if a < b else (b, a)


def _topology_edges(spec: TopologySpec, rng: np.random.Generator) -> set[tuple[HostId, HostId]]:
    n = spec.n_hosts
    if spec.topology == "star":
        return {_edge(0, i) for i in range(1, n)}
    if spec.topology == "tree":
        return {_edge(int(rng.integers(0, i)), i) for i in range(1, n)}
    edges = set()
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < spec.gnp_p:
                edges.add((a, b))
    # Stitch disconnected components onto node 0's component so every
    # generated graph is connected.
    adj: dict[int, set[int]] = {i: set() for i in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen = {0}
    frontier = [0]
    while frontier:
        u = frontier.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                frontier.append(v)
    for i in range(1, n):
        if i not in seen:
            anchor = int(rng.choice(sorted(seen)))
            edges.add(_edge(anchor, i))
            seen.add(i)
    return edges


def _make_host(i: HostId, spec_mix: dict[str, float], domain: str, rng: np.random.Generator) -> Host:
    os_name, versions = OS_CHOICES[int(rng.integers(0, len(OS_CHOICES)))]
    os_version = versions[int(rng.integers(0, len(versions)))]
    services = frozenset(s for s in SERVICES if spec_mix.get(s, 0.0) > rng.random())
    ports = [(SERVICE_PORTS[s], "open") for s in SERVICES if s in services]
    if rng.random() < 0.3:
        ports.append((8443, "closed"))
    file_paths: tuple[str, ...] = ()
    if rng.random() < 0.5:
        file_paths = (MUNDANE_PATHS[int(rng.integers(0, len(MUNDANE_PATHS)))],)
    return Host(
        id=i,
        os=os_name,
        os_version=os_version,
        fqdn=f"host{i:03d}.{domain}",
        dns_domain=domain,
        ip=f"10.0.{i // 256}.{i % 256}",
        ports=tuple(sorted(ports)),
        services=services,
        file_paths=file_paths,
    )


def generate_network(spec: TopologySpec, rng: np.random.Generator) -> NetworkState:
    """Build a connected attributed network with crown jewels and a foothold."""
    spec.validate()
    mix = spec.mix()
    edges = _topology_edges(spec, rng)
    domain = "corp.internal"
    hosts = {i: _make_host(i, mix, domain, rng) for i in range(spec.n_hosts)}

    # Any service requested with positive probability must exist somewhere,
    # or goal-dependent configs would be flaky in the seed.
    for service in SERVICES:
        if mix.get(service, 0.0) > 0.0 and not any(service in h.services for h in hosts.values()):
            lucky = int(rng.integers(0, spec.n_hosts))
            h = hosts[lucky]
            hosts[lucky] = replace(
                h,
                services=h.services | {service},
                ports=tuple(sorted(set(h.ports) | {(SERVICE_PORTS[service], "open")})),
            )

    jewel_ids = [int(j) for j in rng.choice(spec.n_hosts, size=spec.n_crown_jewels, replace=False)]
    for j in jewel_ids:
        hosts[j] = replace(hosts[j], crown_jewel=True, file_paths=CROWN_JEWEL_PATHS)

    candidates = sorted(set(range(spec.n_hosts)) - set(jewel_ids))
    foothold = int(candidates[int(rng.integers(0, len(candidates)))])
    hosts[foothold] = replace(hosts[foothold], rat=RAT_BASIC)

    return NetworkState(hosts=hosts, edges=frozenset(edges))


def isolate_host(state: NetworkState, h: HostId) -> NetworkState:
    """Cut a host off the network. Idempotent."""
    state.host(h)
    return replace(state, isolated=state.isolated | {h})


def _fake_from_template(template: Host, new_id: HostId, domain: str) -> Host:
    return Host(
        id=new_id,
        os=template.os,
        os_version=template.os_version,
        fqdn=f"host{new_id:03d}.{domain}",
        dns_domain=domain,
        ip=f"10.0.{new_id // 256}.{new_id % 256}",
        ports=template.ports,
        services=template.services,
        file_paths=template.file_paths,
        crown_jewel=False,
        honey=True,
    )


def migrate_to_honey(
    state: NetworkState, h: HostId, target: Union[str, int] = "new"
) -> tuple[NetworkState, float]:
    """Move a host into a honey net; returns (new state, provisioning cost).

    target is "new" or the id of an existing honey net. Migrating a host
    already inside any honey net is a no-op with cost 0.
    """
    state.host(h)
    if isinstance(target, int):
        if target not in state.honey_nets:
            raise InvalidActionError(f"unknown honey net id {target!r}")
    elif target != "new":
        raise InvalidActionError(f"migration target must be 'new' or a honey net id, got {target!r}")

    if state.honey_net_of(h) is not None:
        return state, 0.0

    hosts = dict(state.hosts)
    edges = frozenset(e for e in state.edges if h not in e)
    honey_nets = dict(state.honey_nets)
    fake_cjs = set(state.fake_crown_jewels)
    domain = state.hosts[h].dns_domain

    if target == "new":
        net_id = max(honey_nets, default=-1) + 1
        next_id = max(hosts) + 1
        real = [hosts[i] for i in sorted(hosts) if not hosts[i].honey]
        jewels = [x for x in real if x.crown_jewel]
        chaff_pool = [x for x in real if not x.crown_jewel and x.id != h] or real
        fake_jewel = _fake_from_template(jewels[0] if jewels else real[0], next_id, domain)
        new_fakes = [fake_jewel]
        fake_cjs.add(fake_jewel.id)
        for k in range(CHAFF_FAKES_PER_NET):
            template = chaff_pool[k % len(chaff_pool)]
            new_fakes.append(_fake_from_template(template, next_id + 1 + k, domain))
        for fake in new_fakes:
            hosts[fake.id] = fake
        members = frozenset({h} | {f.id for f in new_fakes})
        cost = MIGRATE_COST_NEW
    else:
        net_id = target
        members = honey_nets[net_id] | {h}
        cost = MIGRATE_COST_EXISTING

    honey_nets[net_id] = frozenset(members)
    member_edges = {_edge(a, b) for a in members for b in members if a < b}
    new_state = replace(
        state,
        hosts=hosts,
        edges=edges | member_edges,
        honey_nets=honey_nets,
        fake_crown_jewels=frozenset(fake_cjs),
    )
    return new_state, cost


def _neighbors(state: NetworkState, adj: dict[HostId, list[HostId]], u: HostId) -> Iterator[HostId]:
    net_u = state.honey_net_of(u)
    for v in adj.get(u, ()):
        if v in state.isolated:
            continue
        if state.honey_net_of(v) != net_u:
            continue
        yield v


def adjacency(state: NetworkState) -> dict[HostId, list[HostId]]:
    adj: dict[HostId, list[HostId]] = {h: [] for h in state.hosts}
    for a, b in sorted(state.edges):
        adj[a].append(b)
        adj[b].append(a)
    return adj


def effective_neighbors(state: NetworkState, u: HostId) -> list[HostId]:
    """Hosts directly reachable from u under isolation and honey segregation."""
    state.host(u)
    if u in state.isolated:
        return []
    return sorted(_neighbors(state, adjacency(state), u))


def reachable(state: NetworkState, a: HostId, b: HostId) -> bool:
    """True when a path exists respecting isolation and honey segregation."""
    state.host(a)
    state.host(b)
    if a == b:
        return True
    if a in state.isolated or b in state.isolated:
        return False
    if state.honey_net_of(a) != state.honey_net_of(b):
        return False
    adj = adjacency(state)
    seen = {a}
    frontier = [a]
    while frontier:
        u = frontier.pop()
        for v in _neighbors(state, adj, u):
            if v == b:
                return True
            if v not in seen:
                seen.add(v)
                frontier.append(v)
    return False

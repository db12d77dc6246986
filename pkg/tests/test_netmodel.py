"""Network state: generation, blue transforms, reachability."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decoynet.errors import ConfigError, InvalidActionError
from decoynet.netmodel import (
    TopologySpec,
    generate_network,
    isolate_host,
    migrate_to_honey,
    reachable,
)

from conftest import line_net, make_host, make_net


def bfs_connected(edges, a, b):
    """Independent path oracle over raw edge pairs."""
    adj = {}
    for u, v in edges:
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    seen = {a}
    frontier = [a]
    while frontier:
        u = frontier.pop()
        if u == b:
            return True
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                frontier.append(v)
    return b in seen


# ---------------------------------------------------------------- generation


def test_generate_star_10_hosts_one_jewel():
    spec = TopologySpec(n_hosts=10, topology="star", n_crown_jewels=1)
    net = generate_network(spec, np.random.default_rng(7))
    assert len(net.hosts) == 10
    assert sum(h.crown_jewel for h in net.hosts.values()) == 1
    ids = sorted(net.hosts)
    for a in ids:
        for b in ids:
            assert bfs_connected(net.edges, a, b) or a == b


def test_generate_fresh_state_shape():
    spec = TopologySpec(n_hosts=10, topology="star", n_crown_jewels=1)
    net = generate_network(spec, np.random.default_rng(7))
    assert net.step_count == 0
    assert not net.honey_nets
    assert not net.isolated
    rats = [h for h in net.hosts.values() if h.rat != "none"]
    assert len(rats) == 1
    assert rats[0].rat == "rat"
    assert not rats[0].crown_jewel  # foothold never starts on the jewel


def test_single_host_spec_rejected():
    spec = TopologySpec(n_hosts=1, topology="star", n_crown_jewels=1)
    with pytest.raises(ConfigError):
        generate_network(spec, np.random.default_rng(0))


def test_bad_spec_errors_name_the_field():
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigError, match="n_hosts"):
        generate_network(TopologySpec(n_hosts=-3), rng)
    with pytest.raises(ConfigError, match="gnp_p"):
        generate_network(TopologySpec(n_hosts=5, topology="gnp", gnp_p=0.0), rng)
    with pytest.raises(ConfigError, match="n_crown_jewels"):
        generate_network(TopologySpec(n_hosts=5, n_crown_jewels=0), rng)


def test_generation_deterministic():
    spec = TopologySpec(n_hosts=25, topology="gnp", gnp_p=0.3, n_crown_jewels=2)
    a = generate_network(spec, np.random.default_rng(3))
    b = generate_network(spec, np.random.default_rng(3))
    assert a == b


@pytest.mark.parametrize("kind", ["star", "tree", "gnp"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_every_topology_connected(kind, seed):
    spec = TopologySpec(n_hosts=12, topology=kind, n_crown_jewels=2)
    net = generate_network(spec, np.random.default_rng(seed))
    for b in sorted(net.hosts):
        assert bfs_connected(net.edges, 0, b) or b == 0


def test_every_service_has_an_open_port():
    spec = TopologySpec(n_hosts=20, topology="gnp", n_crown_jewels=3)
    net = generate_network(spec, np.random.default_rng(11))
    for h in net.hosts.values():
        open_ports = {p for p, s in h.ports if s == "open"}
        assert h.services  # never a portless, serviceless husk
        assert len(open_ports) >= len(h.services) > 0
        if h.crown_jewel:
            assert h.file_paths


# ----------------------------------------------------------------- isolation


def test_isolate_cuts_reachability():
    net = line_net(4)
    net = isolate_host(net, 3)
    assert not reachable(net, 3, 0)
    assert not reachable(net, 0, 3)
    assert reachable(net, 0, 2)


def test_isolate_idempotent():
    net = line_net(4)
    once = isolate_host(net, 3)
    twice = isolate_host(once, 3)
    assert once == twice


def test_isolate_unknown_host():
    with pytest.raises(InvalidActionError):
        isolate_host(line_net(3), 99)


# ----------------------------------------------------------------- migration


def test_migrate_new_builds_segregated_net_with_fake_jewel():
    net = line_net(5)
    moved, cost = migrate_to_honey(net, 2, "new")
    assert cost > 0
    net_id = moved.honey_net_of(2)
    assert net_id is not None
    members = moved.honey_nets[net_id]
    fakes = members - {2}
    assert fakes, "honey net must be populated with fake hosts"
    assert any(f in moved.fake_crown_jewels for f in fakes)
    # fake jewels are not real jewels
    for f in fakes:
        assert moved.hosts[f].honey
        assert not moved.hosts[f].crown_jewel
    for other in (0, 1, 3, 4):
        assert not reachable(moved, 2, other)
    for fake in fakes:
        assert reachable(moved, 2, fake)


def test_migrate_existing_cheaper_than_new():
    net = line_net(6)
    net, cost_new = migrate_to_honey(net, 2, "new")
    net_id = next(iter(net.honey_nets))
    net, cost_existing = migrate_to_honey(net, 4, net_id)
    assert 0 < cost_existing < cost_new
    assert net.honey_net_of(4) == net_id
    assert reachable(net, 2, 4)


def test_migrate_already_honey_host_is_free_noop():
    net, _ = migrate_to_honey(line_net(5), 2, "new")
    again, cost = migrate_to_honey(net, 2, "new")
    assert cost == 0.0
    assert again == net


def test_migrate_unknown_net_id():
    with pytest.raises(InvalidActionError):
        migrate_to_honey(line_net(4), 1, 7)


def test_migration_never_touches_real_jewel_flags():
    net = line_net(6)
    before = {h.id for h in net.hosts.values() if h.crown_jewel}
    net, _ = migrate_to_honey(net, 1, "new")
    net = isolate_host(net, 3)
    net, _ = migrate_to_honey(net, 5, "new")
    after = {h.id for h in net.hosts.values() if h.crown_jewel and not h.honey}
    assert before == after


# -------------------------------------------------------------- reachability


def test_reachable_reflexive():
    net = line_net(3)
    assert reachable(net, 1, 1)


def test_star_leaves_reach_via_center():
    spec = TopologySpec(n_hosts=8, topology="star", n_crown_jewels=1)
    net = generate_network(spec, np.random.default_rng(5))
    for i in range(1, 8):
        for j in range(1, 8):
            assert reachable(net, i, j) == bfs_connected(net.edges, i, j)


def test_honey_member_cannot_reach_real_host():
    net, _ = migrate_to_honey(line_net(5), 2, "new")
    net_id = net.honey_net_of(2)
    for member in net.honey_nets[net_id]:
        for hid, h in net.hosts.items():
            if hid not in net.honey_nets[net_id]:
                assert not reachable(net, member, hid)


def test_reachable_unknown_host():
    with pytest.raises(InvalidActionError):
        reachable(line_net(3), 0, 42)


# ---------------------------------------------------------------- properties


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    ops=st.lists(st.tuples(st.sampled_from(["isolate", "new", "existing"]), st.integers(0, 11)), max_size=8),
)
def test_segregation_and_conservation_hold_under_any_op_sequence(seed, ops):
    spec = TopologySpec(n_hosts=12, topology="gnp", gnp_p=0.25, n_crown_jewels=2)
    net = generate_network(spec, np.random.default_rng(seed))
    real_jewels = {h.id for h in net.hosts.values() if h.crown_jewel}

    for op, h in ops:
        if op == "isolate":
            net = isolate_host(net, h)
        elif op == "new":
            net, _ = migrate_to_honey(net, h, "new")
        elif net.honey_nets:
            net, _ = migrate_to_honey(net, h, min(net.honey_nets))

    # conservation: blue ops never mint or destroy real crown jewels
    assert {h.id for h in net.hosts.values() if h.crown_jewel} == real_jewels
    # segregation: honey members never reach non-members
    for net_id, members in net.honey_nets.items():
        outside = [hid for hid in net.hosts if hid not in members]
        for m in members:
            for o in outside:
                assert not reachable(net, m, o)
                assert not reachable(net, o, m)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_reachable_symmetric(seed):
    spec = TopologySpec(n_hosts=9, topology="gnp", gnp_p=0.3, n_crown_jewels=1)
    net = generate_network(spec, np.random.default_rng(seed))
    net = isolate_host(net, 4)
    net, _ = migrate_to_honey(net, 7, "new")
    ids = sorted(net.hosts)
    for a in ids:
        for b in ids:
            assert reachable(net, a, b) == reachable(net, b, a)

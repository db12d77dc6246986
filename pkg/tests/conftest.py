"""Shared helpers for building small hand-wired networks and beliefs."""

import numpy as np
import pytest

from decoynet.netmodel import Host, NetworkState


def make_host(
    hid,
    services=("ssh",),
    crown_jewel=False,
    rat="none",
    file_paths=(),
    honey=False,
):
    ports = {"ssh": 22, "http": 80, "ftp": 21, "amqp": 5672, "ldap": 389}
    return Host(
        id=hid,
        os="linux",
        os_version="5.10",
        fqdn=f"h{hid}.corp.example",
        dns_domain="corp.example",
        ip=f"10.0.0.{hid + 1}",
        ports=tuple(sorted((ports[s], "open") for s in services)),
        services=frozenset(services),
        file_paths=tuple(file_paths),
        crown_jewel=crown_jewel,
        honey=honey,
        rat=rat,
    )


def make_net(hosts, edges):
    """Build a NetworkState from Host objects and raw (a, b) pairs."""
    norm = frozenset((a, b) if a < b else (b, a) for a, b in edges)
    return NetworkState(hosts={h.id: h for h in hosts}, edges=norm)


def line_net(n=3, rat_on=0, cj_on=None, services=("ssh",)):
    """h0 - h1 - ... - h(n-1), RAT on one end, crown jewel on the other."""
    cj = n - 1 if cj_on is None else cj_on
    hosts = [
        make_host(
            i,
            services=services,
            crown_jewel=(i == cj),
            rat=("rat" if i == rat_on else "none"),
            file_paths=("/srv/cjs/data.db",) if i == cj else (),
        )
        for i in range(n)
    ]
    return make_net(hosts, [(i, i + 1) for i in range(n - 1)])


@pytest.fixture
def rng():
    return np.random.default_rng(0)

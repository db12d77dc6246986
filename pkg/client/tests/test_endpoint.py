import pytest

from decoynet_client import ENDPOINT_VAR, EndpointError, connect
from decoynet_client.transport import parse_endpoint


def test_tcp_scheme():
    assert parse_endpoint("tcp://10.0.0.5:4100") == ("tcp", ("10.0.0.5", 4100))


def test_bare_host_port():
    assert parse_endpoint("localhost:8800") == ("tcp", ("localhost", 8800))


def test_stdio_command_is_shell_split():
    kind, argv = parse_endpoint('stdio:decoynet --config "/tmp/my cfg.yaml" serve')
    assert kind == "stdio"
    assert argv == ["decoynet", "--config", "/tmp/my cfg.yaml", "serve"]


@pytest.mark.parametrize("bad", [
    "",
    "   ",
    "localhost",           # no port
    ":4100",               # no host
    "localhost:port",      # non-numeric port
    "localhost:0",         # out of range
    "localhost:70000",
    "udp://localhost:41",  # unsupported scheme
    "stdio:",              # no command
])
def test_malformed_endpoints_rejected(bad):
    with pytest.raises(EndpointError):
        parse_endpoint(bad)


def test_connect_uses_environment_fallback(stub, monkeypatch):
    server = stub()
    monkeypatch.setenv(ENDPOINT_VAR, server.endpoint)
    env = connect()
    assert env.spaces.n_hosts == 10
    env.close()


def test_explicit_endpoint_beats_environment(stub, monkeypatch):
    server = stub()
    monkeypatch.setenv(ENDPOINT_VAR, "127.0.0.1:1")  # nothing listens there
    env = connect(server.endpoint)
    assert env.spaces.n_features == 11
    env.close()


def test_no_endpoint_anywhere(monkeypatch):
    monkeypatch.delenv(ENDPOINT_VAR, raising=False)
    with pytest.raises(EndpointError, match="DECOYNET_ENDPOINT"):
        connect()

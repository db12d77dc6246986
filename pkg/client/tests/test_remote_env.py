import socket

import numpy as np
import pytest

from decoynet_client import (
    BadActionError,
    EndpointError,
    NoEpisodeError,
    ProtocolError,
    RemoteEnv,
    ServerError,
    connect,
)

from conftest import Drop, game_handler, spaces_reply, state_reply


# --- handshake ---------------------------------------------------------------


def test_connect_caches_advertised_spaces(stub):
    env = connect(stub().endpoint)
    assert env.spaces.n_hosts == 10
    assert env.spaces.n_features == 11
    assert env.spaces.obs_dim == 110
    assert env.spaces.n_actions == 32
    assert env.spaces.action_names[0] == "a0"
    env.close()


def test_spaces_fetched_once_per_connection(stub):
    server = stub()
    env = connect(server.endpoint)
    env.reset(seed=1)
    env.step(0)
    env.step(0)
    env.close()
    hellos = [r for r in server.requests if r["type"] in ("hello", "spaces")]
    assert len(hellos) == 1


def test_unreachable_endpoint():
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    dead_port = probe.getsockname()[1]
    probe.close()
    with pytest.raises(EndpointError, match="cannot connect"):
        connect(f"127.0.0.1:{dead_port}")


def test_server_slams_mid_handshake(stub):
    def slam(request):
        raise Drop

    with pytest.raises(EndpointError, match="handshake failed"):
        connect(stub(slam).endpoint)


@pytest.mark.parametrize("reply", [
    {"type": "error", "code": "bad_request", "message": "nope"},
    state_reply(),                      # right shape, wrong type
    {"type": "spaces", "n_hosts": 10},  # missing fields
])
def test_bad_handshake_reply_is_a_connection_error(stub, reply):
    env_reply = dict(reply)

    def handle(request):
        return dict(env_reply)

    with pytest.raises(EndpointError, match="handshake failed"):
        connect(stub(handle).endpoint)


def test_action_count_name_mismatch_rejected(stub):
    def handle(request):
        reply = spaces_reply()
        reply["actions"]["count"] = 5  # names still list 32
        return reply

    with pytest.raises(EndpointError, match="handshake failed"):
        connect(stub(handle).endpoint)


# --- reset / step ------------------------------------------------------------


def test_fresh_reset_returns_zero_int_matrix(stub):
    with connect(stub().endpoint) as env:
        obs = env.reset(seed=3)
        assert obs.shape == (10, 11)
        assert obs.dtype == np.int64
        assert not obs.any()
        assert env.episode_status == "live"


def test_step_mirrors_the_state_reply(stub):
    with connect(stub().endpoint) as env:
        env.reset(seed=3)
        obs, reward, done, info = env.step(4)
        assert obs.shape == (10, 11)
        assert (obs == 1).all()
        assert reward == 0.25
        assert done is False
        assert info == {"termination": None, "step": 1}


def test_done_episode_reports_termination(stub):
    with connect(stub(game_handler(max_steps=2)).endpoint) as env:
        env.reset()
        env.step(0)
        obs, reward, done, info = env.step(0)
        assert done is True
        assert info["termination"] == "timeout"
        assert env.episode_status == "done"


def test_step_before_reset_refused_without_a_round_trip(stub):
    server = stub()
    with connect(server.endpoint) as env:
        with pytest.raises(NoEpisodeError, match="reset before stepping"):
            env.step(0)
    assert all(r["type"] != "step" for r in server.requests)


def test_step_after_done_refused_then_reset_revives(stub):
    server = stub(game_handler(max_steps=1))
    with connect(server.endpoint) as env:
        env.reset()
        env.step(0)
        with pytest.raises(NoEpisodeError, match="episode is over"):
            env.step(0)
        assert sum(r["type"] == "step" for r in server.requests) == 1
        env.reset()
        assert env.episode_status == "live"
        env.step(0)


@pytest.mark.parametrize("action", [-1, 32, 10_000, True, 1.5, "noop", None])
def test_bad_actions_rejected_locally(stub, action):
    server = stub()
    with connect(server.endpoint) as env:
        env.reset()
        with pytest.raises(BadActionError):
            env.step(action)
    assert all(r["type"] != "step" for r in server.requests)


def test_numpy_integer_actions_accepted(stub):
    with connect(stub().endpoint) as env:
        env.reset()
        _, _, _, info = env.step(np.int64(2))
        assert info["step"] == 1


@pytest.mark.parametrize("seed", [True, 1.5, "5"])
def test_non_integer_seed_rejected_locally(stub, seed):
    server = stub()
    with connect(server.endpoint) as env:
        with pytest.raises(TypeError, match="seed must be an integer"):
            env.reset(seed=seed)
    assert all(r["type"] != "reset" for r in server.requests)


def test_numpy_integer_seed_accepted(stub):
    server = stub()
    with connect(server.endpoint) as env:
        env.reset(seed=np.int64(5))
    resets = [r for r in server.requests if r["type"] == "reset"]
    assert resets == [{"id": 1, "type": "reset", "seed": 5}]


# --- server error mapping ----------------------------------------------------


def erroring_handler(code, message):
    def handle(request):
        kind = request["type"]
        if kind in ("hello", "spaces"):
            return spaces_reply()
        if kind == "reset":
            return state_reply()
        if kind == "step":
            return {"type": "error", "code": code, "message": message}
        return {"type": "closed"}

    return handle


def test_no_episode_code_maps_and_clears_local_state(stub):
    server = stub(erroring_handler("no_episode", "reset before stepping"))
    with connect(server.endpoint) as env:
        env.reset()
        with pytest.raises(NoEpisodeError) as excinfo:
            env.step(0)
        assert excinfo.value.code == "no_episode"
        # the server said there is no episode; local bookkeeping follows
        assert env.episode_status is None


def test_bad_action_code_maps(stub):
    server = stub(erroring_handler("bad_action", "action index 7 out of range"))
    with connect(server.endpoint) as env:
        env.reset()
        with pytest.raises(BadActionError) as excinfo:
            env.step(7)
        assert excinfo.value.code == "bad_action"


def test_bad_request_code_is_a_protocol_error(stub):
    server = stub(erroring_handler("bad_request", "field 'action' must be an integer"))
    with connect(server.endpoint) as env:
        env.reset()
        with pytest.raises(ProtocolError, match="server rejected"):
            env.step(0)


def test_unknown_error_code_still_raises_with_code(stub):
    server = stub(erroring_handler("teapot", "short and stout"))
    with connect(server.endpoint) as env:
        env.reset()
        with pytest.raises(ServerError) as excinfo:
            env.step(0)
        assert excinfo.value.code == "teapot"


# --- protocol hygiene ----------------------------------------------------------


def test_mismatched_reply_id_rejected(stub):
    def handle(request):
        reply = spaces_reply()
        reply["id"] = 999
        return reply

    with pytest.raises(EndpointError, match="handshake failed"):
        connect(stub(handle).endpoint)


def test_obs_length_must_match_rows_times_cols(stub):
    def handle(request):
        if request["type"] == "hello":
            return spaces_reply()
        return state_reply(obs=[0] * 7)

    with connect(stub(handle).endpoint) as env:
        with pytest.raises(ProtocolError, match="malformed state"):
            env.reset()


def test_obs_shape_must_match_advertised_spaces(stub):
    def handle(request):
        if request["type"] == "hello":
            return spaces_reply(n_hosts=10, n_features=11)
        return state_reply(n_hosts=5, n_features=11)

    with connect(stub(handle).endpoint) as env:
        with pytest.raises(ProtocolError, match="advertised"):
            env.reset()


def test_connection_lost_mid_episode(stub):
    def handle(request):
        kind = request["type"]
        if kind == "hello":
            return spaces_reply()
        if kind == "reset":
            return state_reply()
        raise Drop

    env = connect(stub(handle).endpoint)
    env.reset()
    with pytest.raises(EndpointError, match="closed the connection"):
        env.step(0)


# --- close ---------------------------------------------------------------------


def test_close_is_polite_and_idempotent(stub):
    server = stub()
    env = connect(server.endpoint)
    env.reset()
    env.close()
    env.close()  # second close is a no-op
    assert server.requests[-1]["type"] == "close"
    with pytest.raises(EndpointError, match="closed"):
        env.step(0)
    with pytest.raises(EndpointError, match="closed"):
        env.reset()


def test_context_manager_closes(stub):
    server = stub()
    with connect(server.endpoint) as env:
        env.reset()
    assert server.requests[-1]["type"] == "close"

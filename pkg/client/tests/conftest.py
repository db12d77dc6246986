"""A canned wire server for exercising the client without the real thing."""

import json
import socket
import threading

import pytest


class Drop(Exception):
    """Raised by a handler to slam the connection without replying."""


class StubServer:
    """Accepts connections in a thread; one handler call per request line.

    The handler returns a reply dict (``id`` is echoed in unless the handler
    set one itself, so tests can lie about it) or raises Drop to close the
    socket mid-conversation.  Every decoded request is recorded in
    ``requests`` for later assertions.
    """

    def __init__(self, handler):
        self._handler = handler
        self._sock = socket.socket()
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind(("127.0.0.1", 0))
        self._sock.listen()
        self.port = self._sock.getsockname()[1]
        self.endpoint = f"127.0.0.1:{self.port}"
        self.requests = []
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()

    def _serve(self):
        while True:
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return  # closed by the fixture
            with conn:
                stream = conn.makefile("rw", encoding="utf-8", newline="\n")
                try:
                    for line in stream:
                        request = json.loads(line)
                        self.requests.append(request)
                        try:
                            reply = self._handler(request)
                        except Drop:
                            # shutdown, not close: the makefile still holds a
                            # reference, so close alone would leave the peer hanging
                            conn.shutdown(socket.SHUT_RDWR)
                            break
                        reply.setdefault("id", request.get("id"))
                        stream.write(json.dumps(reply) + "\n")
                        stream.flush()
                finally:
                    try:
                        stream.close()
                    except OSError:
                        pass

    def close(self):
        self._sock.close()


def spaces_reply(n_hosts=10, n_features=11):
    count = 2 + 3 * n_hosts
    return {
        "type": "spaces",
        "n_hosts": n_hosts,
        "n_features": n_features,
        "actions": {"count": count, "names": [f"a{i}" for i in range(count)]},
    }


def state_reply(n_hosts=10, n_features=11, *, obs=None, reward=0.0, done=False,
                termination=None, step=0):
    return {
        "type": "state",
        "obs": obs if obs is not None else [0] * (n_hosts * n_features),
        "rows": n_hosts,
        "cols": n_features,
        "reward": reward,
        "done": done,
        "termination": termination,
        "step": step,
    }


def game_handler(n_hosts=10, n_features=11, max_steps=5):
    """A tiny fake game: reward 0.25 per step, timeout at max_steps."""
    step_counter = {"n": 0}

    def handle(request):
        kind = request["type"]
        if kind in ("hello", "spaces"):
            return spaces_reply(n_hosts, n_features)
        if kind == "reset":
            step_counter["n"] = 0
            return state_reply(n_hosts, n_features)
        if kind == "step":
            step_counter["n"] += 1
            n = step_counter["n"]
            done = n >= max_steps
            return state_reply(
                n_hosts, n_features,
                obs=[n] * (n_hosts * n_features),
                reward=0.25,
                done=done,
                termination="timeout" if done else None,
                step=n,
            )
        if kind == "close":
            return {"type": "closed"}
        return {"type": "error", "code": "bad_request", "message": f"unknown type {kind!r}"}

    return handle


@pytest.fixture
def stub():
    servers = []

    def make(handler=None):
        server = StubServer(handler or game_handler())
        servers.append(server)
        return server

    yield make
    for server in servers:
        server.close()

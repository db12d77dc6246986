"""RemoteEnv: the wire protocol behind a reset/step interface.

The server owns all game state; this side is a blocking request/response loop
plus the bookkeeping needed to refuse calls that cannot succeed (stepping
before reset, stepping a finished episode, out-of-range actions) without a
round trip.
"""

from __future__ import annotations

import json
import operator
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    BadActionError,
    ClientError,
    EndpointError,
    NoEpisodeError,
    ProtocolError,
    ServerError,
)
from .transport import ENDPOINT_VAR, open_transport


@dataclass(frozen=True)
class Spaces:
    """What the server advertised at handshake."""

    n_hosts: int
    n_features: int
    n_actions: int
    action_names: tuple

    @property
    def obs_dim(self) -> int:
        return self.n_hosts * self.n_features


_CODE_ERRORS = {"no_episode": NoEpisodeError, "bad_action": BadActionError}


def connect(endpoint: Optional[str] = None) -> "RemoteEnv":
    """Open a connection and complete the spaces handshake.

    ``endpoint`` falls back to ``$DECOYNET_ENDPOINT``.  Two forms:

    - ``tcp://HOST:PORT`` (or bare ``HOST:PORT``) — a listening server
    - ``stdio:COMMAND ARGS...`` — spawn the command, talk over its pipes
    """
    if endpoint is None:
        endpoint = os.environ.get(ENDPOINT_VAR)
    if endpoint is None:
        raise EndpointError(f"no endpoint given and ${ENDPOINT_VAR} is not set")
    transport = open_transport(endpoint)
    env = RemoteEnv(transport)
    try:
        reply = env._request({"type": "hello"})
        if reply.get("type") != "spaces":
            raise ProtocolError(f"handshake reply has type {reply.get('type')!r}, not spaces")
        env._spaces = Spaces(
            n_hosts=reply["n_hosts"],
            n_features=reply["n_features"],
            n_actions=reply["actions"]["count"],
            action_names=tuple(reply["actions"]["names"]),
        )
        if env._spaces.n_actions != len(env._spaces.action_names):
            raise ProtocolError("action count does not match the action name list")
    except (ClientError, KeyError, TypeError) as exc:
        # No partial state: whatever went wrong, the caller gets no env.
        transport.close()
        raise EndpointError(f"handshake failed: {exc}") from exc
    return env


class RemoteEnv:
    """One episode stream over one connection.

    Blocking request/response — use one RemoteEnv per thread.  Episodes are
    connection-local, so parallel rollouts are simply parallel connects.
    """

    def __init__(self, transport):
        self._transport = transport
        self._spaces: Optional[Spaces] = None
        self._next_id = 0
        self._episode: Optional[str] = None  # None | "live" | "done"

    @property
    def spaces(self) -> Spaces:
        return self._spaces

    @property
    def episode_status(self) -> Optional[str]:
        """None before the first reset, then "live" or "done"."""
        return self._episode

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        """Start a new episode; returns the (n_hosts, n_features) observation."""
        payload: dict = {"type": "reset"}
        if seed is not None:
            if isinstance(seed, bool):
                raise TypeError("seed must be an integer, got a bool")
            try:
                payload["seed"] = operator.index(seed)  # numpy ints welcome, json needs int
            except TypeError:
                raise TypeError(f"seed must be an integer, got {type(seed).__name__}") from None
        obs, _, done, _ = self._unpack_state(self._request(payload))
        self._episode = "done" if done else "live"
        return obs

    def step(self, action) -> tuple:
        """Apply one action; returns (observation, reward, done, info).

        ``info`` carries the termination reason (None while running) and the
        server-side step counter.
        """
        if self._transport is None:
            raise EndpointError("connection is closed")
        if self._episode is None:
            raise NoEpisodeError("reset before stepping")
        if self._episode == "done":
            raise NoEpisodeError("episode is over; reset to start a new one")
        index = self._action_index(action)
        obs, reward, done, info = self._unpack_state(
            self._request({"type": "step", "action": index})
        )
        if done:
            self._episode = "done"
        return obs, reward, done, info

    def close(self) -> None:
        """Say goodbye and drop the connection.  Idempotent."""
        if self._transport is None:
            return
        try:
            self._request({"type": "close"})
        except ClientError:
            pass  # the connection is going away either way
        finally:
            self._transport.close()
            self._transport = None
            self._episode = None

    def __enter__(self) -> "RemoteEnv":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- plumbing -------------------------------------------------------------

    def _action_index(self, action) -> int:
        if isinstance(action, bool):
            raise BadActionError("action must be an integer index, got a bool")
        try:
            index = operator.index(action)  # accepts numpy integers
        except TypeError:
            raise BadActionError(
                f"action must be an integer index, got {type(action).__name__}"
            ) from None
        if not 0 <= index < self._spaces.n_actions:
            raise BadActionError(
                f"action index {index} out of range [0, {self._spaces.n_actions})"
            )
        return index

    def _request(self, payload: dict) -> dict:
        if self._transport is None:
            raise EndpointError("connection is closed")
        rid = self._next_id
        self._next_id += 1
        message = dict(payload, id=rid)
        self._transport.send_line(json.dumps(message, sort_keys=True, separators=(",", ":")))
        line = self._transport.recv_line()
        try:
            reply = json.loads(line)
        except ValueError:
            raise ProtocolError(f"reply is not JSON: {line[:120]!r}") from None
        if not isinstance(reply, dict):
            raise ProtocolError(f"reply is not an object: {line[:120]!r}")
        if reply.get("id") != rid:
            raise ProtocolError(f"reply id {reply.get('id')!r} does not match request id {rid}")
        if reply.get("type") == "error":
            code = reply.get("code")
            message_text = reply.get("message", "")
            if code in _CODE_ERRORS:
                # The server decides; local bookkeeping follows it.
                if code == "no_episode":
                    self._episode = None
                raise _CODE_ERRORS[code](message_text)
            if code == "bad_request":
                raise ProtocolError(f"server rejected the request: {message_text}")
            raise ServerError(str(code), message_text)
        return reply

    def _unpack_state(self, reply: dict) -> tuple:
        if reply.get("type") != "state":
            raise ProtocolError(f"expected a state reply, got {reply.get('type')!r}")
        try:
            rows, cols = reply["rows"], reply["cols"]
            obs = np.asarray(reply["obs"], dtype=np.int64).reshape(rows, cols)
            result = (
                obs,
                float(reply["reward"]),
                bool(reply["done"]),
                {"termination": reply["termination"], "step": reply["step"]},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed state reply: {exc}") from None
        if (rows, cols) != (self._spaces.n_hosts, self._spaces.n_features):
            raise ProtocolError(
                f"observation is {rows}x{cols}, server advertised "
                f"{self._spaces.n_hosts}x{self._spaces.n_features}"
            )
        return result

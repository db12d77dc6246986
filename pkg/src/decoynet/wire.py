"""Newline-delimited wire protocol for driving episodes remotely.

One JSON record per line, one response per request, every response echoing
the client's request id. The encoding is canonical (sorted keys, no spaces)
so recorded transcripts replay byte-identically. Observations cross as
row-major integer arrays; no floats except the reward.
"""

from __future__ import annotations

import json
import socketserver
import sys
from dataclasses import replace
from typing import IO, Optional

from .errors import DecoynetError, EpisodeFinishedError, InvalidActionError
from .game import (
    EpisodeState,
    GameConfig,
    N_FEATURES,
    ObservationMatrix,
    action_names,
    action_space_size,
    decode_action_index,
    reset,
    step,
)

PROTOCOL_REQUESTS = ("hello", "spaces", "reset", "step", "close")
ERROR_CODES = ("no_episode", "bad_request", "bad_action")


def encode(message: dict) -> str:
    return json.dumps(message, sort_keys=True, separators=(",", ":"))


class WireSession:
    """One client's protocol state machine; episodes are session-local."""

    def __init__(self, config: GameConfig) -> None:
        self.config = config
        self.episode: Optional[EpisodeState] = None
        self.closed = False

    # -- responses ---------------------------------------------------------

    def _spaces(self, req_id) -> dict:
        n = self.config.topology.n_hosts
        host_ids = tuple(range(n))
        return {
            "id": req_id,
            "type": "spaces",
            "n_hosts": n,
            "n_features": N_FEATURES,
            "actions": {"count": action_space_size(n), "names": action_names(host_ids)},
        }

    def _state(self, req_id, obs: ObservationMatrix, reward: float, done: bool, termination) -> dict:
        assert self.episode is not None
        return {
            "id": req_id,
            "type": "state",
            "obs": [int(v) for v in obs.counts.reshape(-1)],
            "rows": len(obs.host_ids),
            "cols": N_FEATURES,
            "reward": reward,
            "done": done,
            "termination": termination,
            "step": self.episode.net.step_count,
        }

    @staticmethod
    def _error(req_id, code: str, message: str) -> dict:
        return {"id": req_id, "type": "error", "code": code, "message": message}

    # -- request handling ----------------------------------------------------

    def handle_line(self, line: str) -> str:
        return encode(self.handle_request(line))

    def handle_request(self, line: str) -> dict:
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            return self._error(None, "bad_request", f"not valid JSON: {exc.msg}")
        if not isinstance(req, dict):
            return self._error(None, "bad_request", "request must be a JSON object")
        req_id = req.get("id")
        kind = req.get("type")
        if kind not in PROTOCOL_REQUESTS:
            return self._error(
                req_id, "bad_request", f"unknown request type {kind!r}; expected one of {list(PROTOCOL_REQUESTS)}"
            )
        try:
            return self._dispatch(kind, req, req_id)
        except DecoynetError as exc:  # engine-level rejections keep the session alive
            return self._error(req_id, "bad_request", str(exc))

    def _dispatch(self, kind: str, req: dict, req_id) -> dict:
        if kind in ("hello", "spaces"):
            return self._spaces(req_id)

        if kind == "reset":
            seed = req.get("seed", self.config.seed)
            if not isinstance(seed, int) or isinstance(seed, bool):
                return self._error(req_id, "bad_request", f"seed must be an integer, got {seed!r}")
            episode, obs = reset(replace(self.config, seed=seed))
            self.episode = episode
            return self._state(req_id, obs, 0.0, False, None)

        if kind == "step":
            if self.episode is None:
                return self._error(req_id, "no_episode", "reset before stepping")
            if self.episode.done:
                return self._error(req_id, "no_episode", "episode finished; reset to continue")
            if "action" not in req:
                return self._error(req_id, "bad_request", "step needs an 'action' field")
            index = req["action"]
            try:
                action = decode_action_index(index, self.episode.base_host_ids)
            except InvalidActionError as exc:
                return self._error(req_id, "bad_action", str(exc))
            try:
                result = step(self.episode, action)
            except EpisodeFinishedError as exc:
                return self._error(req_id, "no_episode", str(exc))
            except InvalidActionError as exc:
                return self._error(req_id, "bad_action", str(exc))
            return self._state(req_id, result.obs, result.reward, result.done, result.termination)

        # close
        self.closed = True
        return {"id": req_id, "type": "closed"}


def serve_stream(config: GameConfig, inp: IO[str], out: IO[str]) -> None:
    """Run one session over text streams (the stdio transport)."""
    session = WireSession(config)
    for line in inp:
        if not line.strip():
            continue
        out.write(session.handle_line(line) + "\n")
        out.flush()
        if session.closed:
            break


class _WireTCPHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        session = WireSession(self.server.game_config)  # type: ignore[attr-defined]
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace")
            if not line.strip():
                continue
            self.wfile.write((session.handle_line(line) + "\n").encode("utf-8"))
            if session.closed:
                break


class WireTCPServer(socketserver.ThreadingTCPServer):
    """One independent episode per connection."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], config: GameConfig) -> None:
        super().__init__(address, _WireTCPHandler)
        self.game_config = config


def serve(config: GameConfig, transport: str = "stdio", host: str = "127.0.0.1", port: int = 0) -> int:
    """Serve the wire protocol until closed (stdio) or interrupted (tcp)."""
    if transport == "stdio":
        serve_stream(config, sys.stdin, sys.stdout)
        return 0
    if transport == "tcp":
        with WireTCPServer((host, port), config) as server:
            bound_host, bound_port = server.server_address[:2]
            print(f"listening on {bound_host}:{bound_port}", flush=True)
            try:
                server.serve_forever()
            except KeyboardInterrupt:
                pass
        return 0
    raise InvalidActionError(f"unknown transport {transport!r}; use stdio or tcp")

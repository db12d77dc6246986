"""Line-oriented transports under the JSON protocol.

Two ways to reach a server: an already-listening TCP socket, or a subprocess
spawned here and spoken to over its pipes.  Both expose the same two calls —
send a line, receive a line — and both surface any kind of connection loss as
EndpointError so the caller never has to care which one it got.
"""

from __future__ import annotations

import shlex
import socket
import subprocess
from typing import Union

from .errors import EndpointError

ENDPOINT_VAR = "DECOYNET_ENDPOINT"

# Generous because a single step can hide a full adversary replan; connect
# itself should be quick.
CONNECT_TIMEOUT = 10.0
IO_TIMEOUT = 60.0

Target = Union[tuple, list]


def parse_endpoint(endpoint: str) -> tuple[str, Target]:
    """Split an endpoint string into (kind, target).

    ``tcp://HOST:PORT`` or bare ``HOST:PORT``  -> ("tcp", (host, port))
    ``stdio:COMMAND ARGS...``                  -> ("stdio", argv list)
    """
    if not endpoint or not endpoint.strip():
        raise EndpointError("empty endpoint")
    if endpoint.startswith("stdio:"):
        argv = shlex.split(endpoint[len("stdio:"):])
        if not argv:
            raise EndpointError("stdio endpoint needs a command to run")
        return "stdio", argv
    rest = endpoint[len("tcp://"):] if endpoint.startswith("tcp://") else endpoint
    if "://" in rest:
        raise EndpointError(f"unknown endpoint scheme in {endpoint!r}; use tcp:// or stdio:")
    host, sep, port_text = rest.rpartition(":")
    if not sep or not host:
        raise EndpointError(f"tcp endpoint needs host:port, got {endpoint!r}")
    try:
        port = int(port_text)
    except ValueError:
        raise EndpointError(f"bad port in {endpoint!r}") from None
    if not 0 < port < 65536:
        raise EndpointError(f"bad port in {endpoint!r}")
    return "tcp", (host, port)


def open_transport(endpoint: str):
    kind, target = parse_endpoint(endpoint)
    if kind == "stdio":
        return StdioTransport(target)
    return TcpTransport(*target)


class TcpTransport:
    def __init__(self, host: str, port: int):
        try:
            self._sock = socket.create_connection((host, port), timeout=CONNECT_TIMEOUT)
        except OSError as exc:
            raise EndpointError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._sock.settimeout(IO_TIMEOUT)
        self._file = self._sock.makefile("rw", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self._file.write(line + "\n")
            self._file.flush()
        except (OSError, ValueError) as exc:
            raise EndpointError(f"connection lost while sending: {exc}") from exc

    def recv_line(self) -> str:
        try:
            line = self._file.readline()
        except (OSError, ValueError) as exc:
            raise EndpointError(f"connection lost while receiving: {exc}") from exc
        if not line:
            raise EndpointError("server closed the connection")
        return line.rstrip("\n")

    def close(self) -> None:
        for closer in (self._file.close, self._sock.close):
            try:
                closer()
            except OSError:
                pass


class StdioTransport:
    """Spawn the server command and speak over its stdin/stdout."""

    def __init__(self, argv: list):
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
            )
        except OSError as exc:
            raise EndpointError(f"cannot spawn {argv[0]!r}: {exc}") from exc

    def send_line(self, line: str) -> None:
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise EndpointError(f"server process is gone: {exc}") from exc

    def recv_line(self) -> str:
        line = self._proc.stdout.readline()
        if not line:
            code = self._proc.poll()
            raise EndpointError(f"server process exited (code {code})")
        return line.rstrip("\n")

    def close(self) -> None:
        # Closing stdin is the protocol-level goodbye; give the process a
        # moment to exit on its own before forcing it.
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()

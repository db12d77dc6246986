"""Thin reset/step client for the decoynet wire protocol."""

from .env import RemoteEnv, Spaces, connect
from .errors import (
    BadActionError,
    ClientError,
    EndpointError,
    NoEpisodeError,
    ProtocolError,
    ServerError,
)
from .transport import ENDPOINT_VAR

__all__ = [
    "BadActionError",
    "ClientError",
    "ENDPOINT_VAR",
    "EndpointError",
    "NoEpisodeError",
    "ProtocolError",
    "RemoteEnv",
    "ServerError",
    "Spaces",
    "connect",
]

"""Exception hierarchy for the client.

The server reports failures as ``{"type": "error", "code": ...}``.  The two
codes a correct caller can still run into — stepping without a live episode
and sending a bad action index — get their own exception types so they can be
caught separately; everything else means the conversation itself went wrong.
"""


class ClientError(Exception):
    """Base class for everything raised by this package."""


class EndpointError(ClientError):
    """Endpoint unreachable, handshake failed, or connection lost."""


class ProtocolError(ClientError):
    """Reply the client cannot reconcile: bad JSON, wrong id, or the server
    rejected a request this client believed well-formed."""


class ServerError(ClientError):
    """An error reply from the server; ``code`` carries the wire error code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class NoEpisodeError(ServerError):
    """Stepped with no live episode: before the first reset or after done."""

    def __init__(self, message: str):
        super().__init__("no_episode", message)


class BadActionError(ServerError):
    """Action index outside the advertised action space (or not an integer)."""

    def __init__(self, message: str):
        super().__init__("bad_action", message)

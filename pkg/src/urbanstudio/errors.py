"""Typed error hierarchy shared across the package.

Each category maps to a distinct CLI exit code (see cli.EXIT_CODES).
"""


class UrbanStudioError(Exception):
    """Base class for all package errors."""


class ConfigError(UrbanStudioError):
    """Bad or missing configuration: unknown keys, missing paths, CRS mismatch."""


class ValidationError(UrbanStudioError):
    """Input violates a documented precondition or invariant."""


class InvalidTransitionError(UrbanStudioError):
    """Workflow operation not legal in the session's current stage."""


class CorruptLogError(UrbanStudioError):
    """Event log has a gap or a malformed record."""

    def __init__(self, message: str, sequence: int | None = None):
        super().__init__(message)
        self.sequence = sequence


class PromptParseError(UrbanStudioError):
    """Prompt string does not match the strict stage grammar."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class NetworkError(UrbanStudioError):
    """Endpoint unreachable or request timed out after retries."""


class BackendTimeoutError(NetworkError):
    """Generation request exceeded its timeout."""


class ProtocolError(UrbanStudioError):
    """Remote response violates the wire-protocol schema."""


class BackendError(UrbanStudioError):
    """Remote backend returned a non-2xx status."""

    def __init__(self, message: str, status: int | None = None, body: str = ""):
        excerpt = body[:200]
        super().__init__(f"{message}: {excerpt}" if excerpt else message)
        self.status = status
        self.body = excerpt

"""Exception types shared across the package."""

from __future__ import annotations


class ProtoclassError(Exception):
    """Base class for all errors raised by this package."""


class FileFormatError(ProtoclassError):
    """A store or head file is malformed.

    ``position`` locates the problem: a CSV row number, a binary record
    index, or a byte offset, formatted into the message.
    """

    def __init__(self, message: str, position: str | None = None):
        if position is not None:
            message = f"{message} (at {position})"
        super().__init__(message)
        self.position = position


class ZeroNormError(ProtoclassError, ValueError):
    """L2 normalization was asked of a zero vector."""


class InsufficientClassesError(ProtoclassError, ValueError):
    """Fewer eligible classes than the requested number of ways."""

    def __init__(self, ways: int, eligible: int):
        super().__init__(
            f"episode requires {ways} ways but only {eligible} classes are eligible"
        )
        self.ways = ways
        self.eligible = eligible


class NonFiniteLossError(ProtoclassError, FloatingPointError):
    """Training produced a non-finite loss and was aborted."""

    def __init__(self, episode_index: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at episode {episode_index}")
        self.episode_index = episode_index
        self.loss = loss


class NonFiniteGradientError(ProtoclassError, FloatingPointError):
    """An optimizer step received a non-finite gradient."""

    def __init__(self, block: str):
        super().__init__(f"non-finite gradient in parameter block {block!r}")
        self.block = block

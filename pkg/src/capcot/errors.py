"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CapCotError(Exception):
    """Base class for every error raised by capcot."""


# parsing / domain
class MalformedChain(CapCotError):
    """Model output contains neither numbered steps nor an answer marker."""


class NoAnswerFound(CapCotError):
    pass


class UnparseableAnswer(CapCotError):
    pass


class FeedbackUnparseable(CapCotError):
    """Feedback text has neither a solver directive nor a next strategy."""


# backend
class BackendError(CapCotError):
    pass


class TransientBackendError(BackendError):
    """Retryable failure (timeout, HTTP 429 or 5xx); see :func:`capcot.backend.complete`."""


class BackendUnavailable(BackendError):
    """Raised once the retry budget is exhausted."""


class InvalidResponse(BackendError):
    """Provider response does not match the chat-completions schema."""


class ScriptMiss(BackendError):
    def __init__(self, key):
        self.key = key
        super().__init__(f"no scripted response for {key!r}")


# agents / cycle / eval
class EmptyTaxonomy(CapCotError):
    pass


class ResumeMismatch(CapCotError):
    """Stored lineage was produced by a different configuration."""


class MissingLineage(CapCotError):
    pass


class UnreadableFile(CapCotError):
    pass


class EmptyDataset(CapCotError):
    pass


class ConfigError(CapCotError):
    pass

"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class FastfailError(Exception):
    """Base class for every error raised by this package."""


class PathError(FastfailError):
    """A repository path is malformed (empty, absolute, or escapes the root)."""


class UnknownSuiteError(FastfailError):
    """A coverage record or selection referenced a suite the database does not know."""


class SuiteConflictError(FastfailError):
    """Two registrations of the same suite id disagree on its kind."""


class FormatError(FastfailError):
    """A persisted document is malformed; the message carries the location."""


class SchemaVersionError(FormatError):
    """A persisted document was written with an unsupported schema version."""


class JournalParseError(FormatError):
    """The commit journal text violates the journal format."""


class JournalIntegrityError(FastfailError):
    """Commit chain is broken: bad parent links, duplicate ids, or time travel."""


class UnknownCommitError(FastfailError):
    """A commit id was not found in the journal."""


class RangeError(FastfailError):
    """A commit range (from, to] is empty or reversed."""


class AdapterUnavailableError(FastfailError):
    """The VCS adapter could not be reached; the caller may retry."""


class ConfigurationError(FastfailError):
    """Invalid configuration: unknown keys, bad thresholds, unknown suites or rules."""


class DegenerateInputError(FastfailError):
    """An operation received input it cannot meaningfully compute over."""


class IngestionError(FastfailError):
    """A coverage artifact is missing or unparseable; the message names the path."""


class StateError(FastfailError):
    """An operation was invoked in a state that does not permit it."""


class ConsistencyError(FastfailError):
    """Bisect verdicts contradict the assumed monotone good-to-bad ordering."""


class LexError(FastfailError):
    """Source text could not be tokenized (unterminated string or comment)."""

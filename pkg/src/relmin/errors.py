"""Exception taxonomy shared across the toolkit.

``DataError`` subclasses map to CLI exit code 2 (bad input data),
``UsageError`` to exit code 1; anything else surfacing from a run is a
runtime failure (exit code 3).
"""


class RelminError(Exception):
    """Base class for all toolkit errors."""


class UsageError(RelminError):
    """Invalid configuration or argument combination."""


class DataError(RelminError):
    """Malformed or inconsistent input data."""


class CorpusFormatError(DataError):
    """Corpus file violates the line-delimited record format."""


class ParseFormatError(DataError):
    """Dependency parse file violates the CoNLL-U contract."""


class PackFormatError(DataError):
    """Tensor pack index/blob inconsistency."""


class TrainingError(RelminError):
    """Training aborted (non-finite loss, empty set after pruning, ...)."""

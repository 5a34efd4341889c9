"""Exception hierarchy.

``InputError`` subclasses describe bad user input (files, config values) and
map to exit code 2 in the CLI; anything else is an internal failure.
"""

from __future__ import annotations


class StreamRagError(Exception):
    """Base class for all package errors."""


class InputError(StreamRagError):
    """Raised for malformed or inconsistent user-supplied input."""


# corpus
class MissingId(InputError):
    pass


class DuplicateId(InputError):
    pass


class MalformedRecord(InputError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BadLabel(MalformedRecord):
    pass


class MalformedLine(MalformedRecord):
    pass


class ZeroChunkSize(InputError):
    pass


# embed
class DimMismatch(InputError):
    pass


class NonFiniteComponent(InputError):
    pass


class NotNormalizable(InputError):
    pass


class ZeroNorm(StreamRagError):
    pass


# hhindex
class ZeroCapacity(InputError):
    pass


class NotInitialized(StreamRagError):
    pass


class EmptyCorpus(InputError):
    pass


# cluster
class TooManyClusters(InputError):
    pass


class EmptyInput(InputError):
    pass


class NoCentroids(StreamRagError):
    pass


class SingleCluster(StreamRagError):
    pass


# retrieve
class BadAlpha(InputError):
    pass


class BadProbeCount(InputError):
    pass


class MismatchedClustering(InputError):
    pass


# eval
class DegenerateQrels(StreamRagError):
    pass


# cli
class ArtifactMissing(InputError):
    pass


class ConfigError(InputError):
    pass

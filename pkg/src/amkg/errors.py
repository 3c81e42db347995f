"""Exception hierarchy shared by every amkg module."""


class AMKGError(Exception):
    """Base class for all package errors."""


class EntityNameError(AMKGError, ValueError):
    """A raw entity name normalized to the empty string."""


class ValidationError(AMKGError):
    """An entity or relation payload violates a kind-specific rule."""


class EndpointError(AMKGError):
    """A relation references an entity that is not stored."""


class NotFoundError(AMKGError, KeyError):
    """Lookup of an unknown URI or cluster."""

    def __str__(self):
        return Exception.__str__(self)


class ChunkOverflowError(AMKGError):
    """A single indivisible block exceeds the chunk token budget."""


class BackendError(AMKGError):
    """A generation or embedding backend failed or returned unusable output."""


class ExtractionError(AMKGError):
    """Backend output could not be parsed even after a retry."""

    def __init__(self, message, raw=None):
        super().__init__(message)
        self.raw = raw


class MetricsError(AMKGError):
    """Evaluation metric is undefined for the given inputs."""


class DimensionError(AMKGError, ValueError):
    """Vectors of different lengths were compared."""


class MissingEmbeddingError(AMKGError):
    """An entity has no embedding where one is required."""


class QueryError(AMKGError, ValueError):
    """Malformed retrieval query."""


class RetrievalError(AMKGError):
    """Retrieval cannot run on the given graph."""


class ParseError(AMKGError, ValueError):
    """LaTeX syntax error; ``offset`` is the byte offset of the failure."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedError(ParseError):
    """A LaTeX command outside the supported subset."""

    def __init__(self, command, offset=None):
        super().__init__(f"unsupported command {command!r}", offset)
        self.command = command


class CompileError(AMKGError):
    """An expression references a symbol that is not bound."""


class FitError(AMKGError):
    """Least-squares fit failed; ``last_theta`` holds the final iterate."""

    def __init__(self, message, last_theta=None):
        super().__init__(message)
        self.last_theta = last_theta


class NoCandidateError(AMKGError):
    """Every generated candidate equation was rejected."""

    def __init__(self, message, raw=None):
        super().__init__(message)
        self.raw = raw


class UncertaintyError(AMKGError):
    """Bootstrap uncertainty normalization is undefined (zero target spread)."""


class BootstrapError(AMKGError):
    """Too many bootstrap refits failed."""

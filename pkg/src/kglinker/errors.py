"""Exception types shared across the package."""


class KglinkerError(Exception):
    """Base class for all package errors."""


class ParseError(KglinkerError):
    """A line-oriented input file could not be parsed."""

    def __init__(self, message: str, line_number: int | None = None, source: str | None = None):
        self.line_number = line_number
        self.source = source
        prefix = ""
        if source is not None:
            prefix += f"{source}:"
        if line_number is not None:
            prefix += f"{line_number}: "
        super().__init__(prefix + message)


class NodeNotFoundError(KglinkerError):
    """An identifier does not name any node of the graph."""


class IndexVersionError(KglinkerError):
    """A persisted index file has an incompatible version header."""


class TrainingError(KglinkerError):
    """Training data is degenerate (single class, too few examples, ...)."""


class InstanceError(KglinkerError):
    """A disambiguation instance could not be built or transformed."""


class TooLargeError(InstanceError):
    """The exact solver's enumeration budget would be exceeded."""


class ManifestError(KglinkerError):
    """Artifact directory is inconsistent with the requested configuration."""


class DataError(KglinkerError):
    """An input dataset violates a precondition (e.g. missing gold labels)."""

"""Exception hierarchy shared across the package."""


class DistForestError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(DistForestError, ValueError):
    """Distribution parameters outside the valid domain (e.g. sigma <= 0)."""


class DomainError(DistForestError, ValueError):
    """Response value or probability outside the family support."""


class DegenerateSampleError(DistForestError):
    """The weighted likelihood has no interior maximum.

    ``rows`` carries the offending query indices for batch fits.
    """

    def __init__(self, message, rows=None):
        super().__init__(message)
        self.rows = rows


class ConvergenceError(DistForestError):
    """Optimizer hit its iteration limit; ``best`` holds the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NoAdmissibleSplitError(DistForestError):
    """No split point leaves ``minbucket`` rows on both sides."""


class SchemaError(DistForestError, ValueError):
    """Covariate rows do not match the training schema."""


class DataError(DistForestError, ValueError):
    """Malformed input file or value."""


class ArchiveVersionError(DistForestError):
    """Model archive written by an unsupported format version."""

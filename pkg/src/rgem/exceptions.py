"""Exception types raised across the package."""


class RgemError(Exception):
    """Base class for all package errors."""


class IndefiniteError(RgemError, ValueError):
    """A matrix expected to be positive definite failed Cholesky factorization."""


class DegenerateDataError(RgemError, ValueError):
    """The data cannot support the requested model (too few distinct points, zero variance...)."""


class EmptyClusterError(RgemError):
    """A mixture component lost (almost) all of its responsibility mass."""

    def __init__(self, k, mass, floor):
        self.k = k
        self.mass = mass
        self.floor = floor
        super().__init__(
            f"cluster {k} has responsibility mass {mass:.3g} below floor {floor:.3g}"
        )


class InsufficientDataError(RgemError, ValueError):
    """Not enough rows to carry out a split, fold or subsample."""


class AllCandidatesIndefiniteError(RgemError):
    """Every penalty candidate produced a non-factorizable covariance."""


class DomainError(RgemError, ValueError):
    """A parameter lies outside its admissible domain."""


class ParseError(RgemError, ValueError):
    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class SchemaError(RgemError, ValueError):
    """The file does not match the ingestion schema."""


class DimensionError(RgemError, ValueError):
    """Array shapes or lengths do not agree."""


class ConfigError(RgemError, ValueError):
    """Invalid experiment configuration."""

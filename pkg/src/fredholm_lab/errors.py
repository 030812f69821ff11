"""Exception types shared across the package."""


class FredholmLabError(Exception):
    """Base class for all package errors."""


class GeometryError(FredholmLabError, ValueError):
    """Coordinates, ranges or operator shapes are inconsistent."""


class ConfigurationError(FredholmLabError, ValueError):
    """A parameter or run configuration is invalid."""


class NotHermitianError(FredholmLabError, ValueError):
    """An operation that needs a Hermitian operator received another one."""


class GapViolationError(FredholmLabError):
    """An energy or switch window touches the spectrum."""


class SymmetryError(FredholmLabError, ValueError):
    """A symmetry constraint (time reversal, Θ-odd) is violated."""


class AmbiguityError(FredholmLabError):
    """A near-kernel cluster or a localization count cannot be resolved."""


class IntegrityError(FredholmLabError):
    """A numerical consistency check failed (e.g. a non-monotone sequence)."""


class OracleError(FredholmLabError):
    """An oracle cannot produce a trustworthy reference value."""

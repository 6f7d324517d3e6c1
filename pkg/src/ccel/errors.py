"""Exception hierarchy shared across the package.

Every error raised on purpose derives from :class:`CcelError` so callers (the
CLI in particular) can separate numerical failures from programming bugs.
"""


class CcelError(Exception):
    """Base class for package errors."""


class InvalidInputError(CcelError, ValueError):
    """Inputs violate a documented precondition (shape, finiteness, rank)."""


class SchemaError(InvalidInputError):
    """A dataset or config file does not match the expected layout."""


class IdentifiabilityError(CcelError):
    """The intercept cannot be pinned down (case and control means coincide)."""


class ConstraintInfeasibleError(CcelError):
    """Zero lies outside the convex hull of the constraint vectors."""

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


class NonConvergenceError(CcelError):
    """An iterative solver stopped before reaching its tolerance.

    ``best`` carries the last iterate, ``residual`` the final residual or
    gradient norm, and ``trace`` an optional iteration history.
    """

    def __init__(self, message, best=None, residual=None, trace=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.trace = trace


class SeparationError(CcelError):
    """Prospective logistic fit diverges because the data are separable."""


class SingularBlockError(CcelError, ArithmeticError):
    """A matrix that must be inverted is singular or badly conditioned."""

    def __init__(self, message, block=None, condition=None):
        super().__init__(message)
        self.block = block
        self.condition = condition


class DiagnosticsError(CcelError):
    """A computed quantity failed a sanity check (e.g. negative variance)."""


class ProtocolError(CcelError):
    """The real-data resampling protocol cannot be carried out on this data."""


class ConfigError(SchemaError):
    """A run config is invalid; the message names the field and file position."""

    def __init__(self, message, field=None, location=None):
        prefix = f"{location}: " if location else ""
        where = f"field '{field}': " if field else ""
        super().__init__(prefix + where + message)
        self.field = field
        self.location = location

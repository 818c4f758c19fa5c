"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation 2, capacity 3, numerical 4,
I/O 5 (plain OSError).
"""


class ChainhistError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(ChainhistError, ValueError):
    """Malformed input: bad network, scenario field, or parameter domain."""


class ModelMismatchError(ValidationError):
    """Model kind or state alphabet incompatible with the requested builder."""


class CapacityError(ChainhistError):
    """State space exceeds the configured size cap (override with allow_large)."""


class NumericalError(ChainhistError):
    """Overflow or NaN detected during a computation.

    ``step`` carries the first affected timestep index when known.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step

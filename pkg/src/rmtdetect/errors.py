"""Exception taxonomy shared across the package.

Two top-level families map onto the CLI exit codes: input/contract
problems exit 1, numerical failures exit 2.
"""


class RmtDetectError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InputError(RmtDetectError):
    """Bad inputs, violated preconditions, broken file formats."""

    exit_code = 1


class NumericalError(RmtDetectError):
    """Failures of the numerical machinery itself."""

    exit_code = 2


class MalformedInputError(InputError):
    """A file could not be parsed; message carries row/column location."""


class UnrecoverableRowError(InputError):
    """A data row is unusable under every missing-data policy."""


class InsufficientHistoryError(InputError):
    """Window end index leaves fewer than T samples of history."""


class AspectRatioError(InputError):
    """More rows than columns: the ratio c = N/T must stay in (0, 1]."""


class DegenerateRowError(InputError):
    """A row has zero variance and the policy forbids jitter."""


class ShapeError(InputError):
    """Matrix dimensions are incompatible for the requested operation."""


class ParameterError(InputError):
    """A numeric parameter is outside its admissible range."""


class ContractError(InputError):
    """Caller violated an API contract (kind mismatch, unknown node, ...)."""


class ConfigurationError(InputError):
    """A run configuration is incomplete or inconsistent."""


class InvariantViolationError(InputError):
    """A value object failed its own invariants (e.g. indefinite covariance)."""


class NumericalFailureError(NumericalError):
    """An eigensolver or quadrature failed to converge."""


class DivergenceError(NumericalError):
    """The requested integral does not converge for these parameters."""

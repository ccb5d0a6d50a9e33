"""Exception hierarchy shared by all modules.

The CLI maps UsageError/ParameterError to exit code 1 and everything
else derived from KpcaoodError to exit code 2.
"""


class KpcaoodError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(KpcaoodError):
    """Operand dimensions are incompatible with the operation."""


class DataError(KpcaoodError):
    """Input data violates an invariant (non-finite values, too few rows, ...)."""


class FormatError(DataError):
    """A file does not conform to the declared on-disk format."""


class LengthError(FormatError):
    """Payload length disagrees with the header (truncated or empty)."""


class ConvergenceError(KpcaoodError):
    """An iterative numerical routine failed to converge."""


class ParameterError(KpcaoodError):
    """A hyper-parameter is outside its valid range."""


class UsageError(KpcaoodError):
    """The requested combination of inputs/options is invalid."""


class DegenerateInputError(DataError):
    """An input vector is degenerate for the operation (e.g. zero norm)."""


class UnsupportedKernelError(ParameterError):
    """The kernel family does not support the requested operation."""


class DegenerateKernelError(KpcaoodError):
    """A kernel matrix collapsed numerically (no usable eigenpairs)."""


class ResourceError(KpcaoodError):
    """A deliberate size cap was exceeded."""

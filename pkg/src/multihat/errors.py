"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration and input problems exit
with 2, numeric/runtime failures with 3.
"""


class MultihatError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MultihatError):
    """Invalid configuration, file, or command-line input."""


class ShapeError(MultihatError):
    """Operands with incompatible shapes."""


class ContractError(MultihatError):
    """A documented precondition of an operation was violated."""


class NumericError(MultihatError):
    """A computation produced non-finite values."""


class TokenizationError(MultihatError):
    """Text cannot be segmented with the given vocabulary."""


class AnnotationError(MultihatError):
    """Transcript annotation is inconsistent with its text."""

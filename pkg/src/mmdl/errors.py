"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes, so each category is kept distinct.
"""


class MMDLError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MMDLError, ValueError):
    """Invalid configuration or hyperparameter value."""


class ShapeError(MMDLError, ValueError):
    """Operand shapes do not conform."""


class DegenerateInputError(MMDLError, ValueError):
    """A row is (numerically) the zero vector where a direction is required."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ContractError(MMDLError, ValueError):
    """A documented precondition of an operation does not hold."""


class LabelError(MMDLError, ValueError):
    """A class label is outside the valid range."""


class RangeError(MMDLError, IndexError):
    """An index-like argument (epoch, k) is out of range."""


class ProtocolError(MMDLError, ValueError):
    """The evaluation protocol cannot be run on the given data."""


class DataError(MMDLError):
    """Problems with dataset contents or files."""


class ParseError(DataError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class EmptyDatasetError(DataError, ValueError):
    pass


class CheckpointError(MMDLError):
    pass


class MalformedCheckpointError(CheckpointError, ValueError):
    pass


class ShapeMismatchError(CheckpointError, ShapeError):
    pass


class NumericError(MMDLError, ArithmeticError):
    """A non-finite value appeared in a loss or function evaluation."""

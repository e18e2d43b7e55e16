"""Exception taxonomy shared by all modules.

The CLI maps these onto exit codes: invalid input / bad configuration -> 2,
file-format and I/O problems -> 3, numerical failures -> 4.
"""


class MirdError(Exception):
    """Base class for all package errors."""


class InvalidInputError(MirdError, ValueError):
    """An argument violates an operation's preconditions."""


class ConfigError(MirdError, ValueError):
    """A configuration object violates its invariants."""


class FloFormatError(MirdError, ValueError):
    """A .flo file is malformed; carries the byte offset of the problem."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class NumericalError(MirdError, ArithmeticError):
    """A numerical process produced non-finite values; carries the step."""

    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"{message} (step t={step})"
        super().__init__(message)
        self.step = step


class GenerationError(MirdError, ValueError):
    """A synthetic scene cannot be rendered as specified."""

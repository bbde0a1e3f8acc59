"""Exception hierarchy.

Everything the toolkit raises for bad user input derives from
:class:`InputError`, which the CLI maps to exit code 2.
"""


class MriEvalError(Exception):
    """Base class for all toolkit errors."""


class InputError(MriEvalError, ValueError):
    """Invalid, malformed or inconsistent input."""


class NiftiFormatError(InputError):
    """A NIfTI-1 byte stream could not be decoded.

    ``offset`` is the byte position in the (decompressed) stream where the
    problem was detected.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class CalibrationError(InputError):
    """No QC threshold on the grid satisfies the target fail fraction."""


class NumericalError(MriEvalError, ArithmeticError):
    """A computation produced a value outside its mathematical domain."""

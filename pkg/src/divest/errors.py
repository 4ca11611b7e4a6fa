"""Exception types raised by divest."""


class DivestError(Exception):
    """Base class for all divest errors."""


class ArgumentError(DivestError, ValueError):
    """Invalid input: wrong shape, non-finite values, unsupported combination."""


class BandwidthError(ArgumentError):
    """A kernel bandwidth could not be determined from the data."""


class InfeasibleError(DivestError, ValueError):
    """A conjugate function is infinite at one of the supplied values."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SamplingError(DivestError, RuntimeError):
    """Rejection sampling cannot make progress."""


class NumericError(DivestError, ArithmeticError):
    """A linear system stayed singular after jitter escalation."""


class ParseError(ArgumentError):
    """Malformed text input (sample files, distribution strings, CSV)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

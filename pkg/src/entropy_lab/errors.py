"""Exception hierarchy shared by the library and the command line."""


class EntropyLabError(Exception):
    """Base class for all errors raised by entropy_lab."""


class ValidationError(EntropyLabError, ValueError):
    """Invalid input: bad parameters, malformed words, mismatched groups."""


class NumericalError(EntropyLabError, ArithmeticError):
    """A solver failed to reach its tolerance or hit an iteration cap."""


class CapacityError(NumericalError):
    """A requested enumeration or truncation exceeds the configured size cap."""

"""Exception hierarchy shared by every module."""


class KLRRError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(KLRRError, ValueError):
    pass


class DomainError(KLRRError, ValueError):
    """A fractional power was asked of a non-positive base, or a radicand went negative."""


class NotPSDError(KLRRError, ValueError):
    pass


class NumericalError(KLRRError, ArithmeticError):
    """Non-finite values or solver failure.

    ``diagnostics`` carries whatever state was available at failure time
    (iterate, step size, partial objective trace).
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class StepSizeError(NumericalError):
    """The proximal subproblem is not strongly convex at the current step size."""


class FormatError(KLRRError, ValueError):
    """Malformed input file. ``offset`` is the byte offset where parsing failed, if known."""

    def __init__(self, message, offset=None, path=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.offset = offset
        self.path = path

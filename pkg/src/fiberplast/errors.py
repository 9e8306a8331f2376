"""Exception hierarchy shared by all modules."""


class FiberplastError(Exception):
    """Base class for package errors."""


class ConfigurationError(FiberplastError, ValueError):
    """Invalid parameters or configuration.

    ``violations`` holds one message per violated rule so callers can report
    all of them at once.
    """

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations) if violations else [message]


class DomainError(FiberplastError, ValueError):
    """A query outside the lattice domain."""


class QuadratureError(FiberplastError, ArithmeticError):
    """A quadrature produced non-finite values or failed to converge."""


class SolverError(FiberplastError, RuntimeError):
    """An incremental step or evolution failed.

    ``step`` is the failing time index when known, ``diagnostics`` a dict of
    residuals and iteration counts.
    """

    def __init__(self, message, step=None, diagnostics=None):
        super().__init__(message)
        self.step = step
        self.diagnostics = dict(diagnostics or {})

"""Exception hierarchy shared by all modules."""


class RumorLocError(Exception):
    """Base class for library errors."""


class ParseError(RumorLocError, ValueError):
    """Malformed input text (edge lists, cascade files, config files)."""


class ValidationError(RumorLocError, ValueError):
    """A value violates a domain invariant."""


class NotFoundError(RumorLocError, KeyError):
    """A node or edge is not present."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class CoverageError(RumorLocError):
    """A sensor was never reached by the cascade or from a candidate."""


class EmptyGatewayError(RumorLocError):
    """The partition has a single cluster, so there are no gateway nodes."""


class NumericalError(RumorLocError, ArithmeticError):
    """Factorization failed (e.g. a covariance is not positive definite)."""


class InfeasibleError(RumorLocError):
    """A linear system of constraints has no solution."""


class ConvergenceError(RumorLocError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateInputError(RumorLocError, ValueError):
    """Input makes an iteration collapse (e.g. a zero vector)."""


class UnrecoverableError(RumorLocError):
    """No observed entries are left to recover from."""

"""Exception types raised across the package."""


class ContractViolation(ValueError):
    """An argument has the wrong length or shape."""


class DomainError(ValueError):
    """A parameter lies outside its admissible range."""


class SingularShiftError(ArithmeticError):
    """A shifted structured matrix ``I + d*M`` is (numerically) singular."""


class InsufficientWeightsError(ValueError):
    """Fewer tempered weights were generated than the grid needs."""


class RefusalError(RuntimeError):
    """A reference-only or capped operation was asked to run above its size cap."""


class BreakdownError(ArithmeticError):
    """Arnoldi broke down before the residual reached zero."""


class OperatorFailure(ArithmeticError):
    """A user supplied operator returned NaN or Inf."""


class MarchFailure(RuntimeError):
    """A linear solve inside the time march did not converge."""

    def __init__(self, step, stats, message=None):
        self.step = step
        self.stats = stats
        super().__init__(message or f"linear solver failed at time step {step}")


class ConfigError(ValueError):
    """Invalid configuration file content."""

"""Exception types. Each maps to a CLI exit code."""


class InvalidArgument(ValueError):
    """Argument outside the operation's domain (exit code 2)."""


class DataError(ValueError):
    """Malformed or inconsistent input data (exit code 3)."""


class DegenerateInput(DataError):
    """Input is well formed but the operation is undefined on it."""


class DivergenceError(ArithmeticError):
    """Training produced a non-finite loss or parameters (exit code 4)."""

    def __init__(self, epoch, step, message=None):
        self.epoch = epoch
        self.step = step
        super().__init__(message or f"training diverged (non-finite value) at epoch {epoch}, step {step}")


class InvariantViolation(RuntimeError):
    """Internal bookkeeping check failed."""

"""Exception types shared across the package.

The CLI maps ``ValidationError`` to exit code 1 and ``NumericalError`` to 2.
"""


class ValidationError(ValueError):
    """Malformed input: bad shapes, non-finite values, inconsistent config."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (non-convergence, non-finite loss, ...)."""


class ConvergenceError(NumericalError):
    def __init__(self, message, iterations):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations

"""Exception types shared across the package."""


class NFBMError(Exception):
    """Base class for all errors raised by :mod:`nfbm`."""


class DimensionError(NFBMError, ValueError):
    """Two vectors (or a vector and an operator) disagree in size."""

    def __init__(self, left, right, what="vectors"):
        self.left = left
        self.right = right
        super().__init__(f"dimension mismatch between {what}: {left} != {right}")


class MetricError(NFBMError, ValueError):
    """The metric is not strongly monotone (negative quadratic form)."""


class ParameterError(NFBMError, ValueError):
    """An algorithm parameter lies outside its admissible range."""


class InfeasibleParametersError(ParameterError):
    """A closed-form parameter formula has no admissible value.

    ``quantity`` names the offending expression (a radicand or the
    resulting parameter).
    """

    def __init__(self, quantity, value):
        self.quantity = quantity
        self.value = value
        super().__init__(f"infeasible parameters: {quantity} = {value!r}")


class DivergenceError(NFBMError, ArithmeticError):
    """A non-finite value appeared in the iteration."""

    def __init__(self, iteration, what="iterate"):
        self.iteration = iteration
        super().__init__(f"non-finite {what} at iteration {iteration}")

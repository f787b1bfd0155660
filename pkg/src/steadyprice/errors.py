"""Exception types shared across the pricing engine."""

from __future__ import annotations


class PricingEngineError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PricingEngineError):
    """A scenario table or input record violates a model invariant."""


class NonNormalizedPmf(ValidationError):
    """Scenario masses do not sum to 1 within the renormalization window."""

    def __init__(self, total: float):
        self.total = float(total)
        super().__init__(
            f"scenario masses sum to {total!r}, outside the renormalization "
            f"window around 1.0"
        )


class NegativeMass(ValidationError):
    """A scenario row carries a negative probability mass."""


class DimensionMismatch(ValidationError):
    """Vector lengths or demand dimensions disagree."""


class InconsistentDuplicate(ValidationError):
    """Two rows share a demand vector but disagree on price or revenue."""


class InvalidScenarioValue(ValidationError):
    """A value is non-finite or outside its allowed sign range."""


class EmptyHistory(ValidationError):
    """A demand history holds no observations."""


class ScenarioParseError(PricingEngineError):
    """A scenario or history file could not be parsed."""

    def __init__(self, message: str, *, path: str | None = None,
                 line: int | None = None, column: int | str | None = None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class InfeasibleFairness(PricingEngineError):
    """No non-negative price level can raise the expected starting price.

    Carries the fairness target (expected starting price) and the largest
    expectation retrievable with non-negative prices, so callers can report
    the shortfall.
    """

    def __init__(self, target: float, retrievable: float):
        self.target = float(target)
        self.retrievable = float(retrievable)
        self.shortfall = self.target - self.retrievable
        super().__init__(
            f"expected starting price {self.target!r} exceeds the maximum "
            f"retrievable expectation {self.retrievable!r} "
            f"(shortfall {self.shortfall!r}); pass allow_negative_level=True "
            f"to price anyway at the cost of risk-freeness"
        )


class FairnessUnreachable(PricingEngineError):
    """The fairness residual of the linear fit stopped improving."""

    def __init__(self, residual: float, big_m: float):
        self.residual = float(residual)
        self.big_m = float(big_m)
        super().__init__(
            f"fairness residual stalled at {self.residual!r} with penalty "
            f"weight {self.big_m!r}; no non-negative linear function appears "
            f"to satisfy the fairness constraint"
        )


class NonConvergence(PricingEngineError):
    """The active-set solver ran out of iterations.

    The partial solution reached so far is attached as ``solution``.
    """

    def __init__(self, message: str, solution=None):
        self.solution = solution
        super().__init__(message)


class TooLarge(PricingEngineError):
    """The instance is too large for exhaustive certification."""

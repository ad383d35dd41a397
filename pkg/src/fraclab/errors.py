"""Exception types shared across the package."""


class FracLabError(Exception):
    """Base class for all package-specific errors."""


class UsageError(FracLabError):
    """Invalid arguments, grids, or configuration (CLI exit code 2)."""


class NumericalError(FracLabError):
    """A numerical procedure failed beyond its documented safeguards (CLI exit code 3)."""


class StrategyError(FracLabError):
    """A trading rule produced a non-finite position."""

    def __init__(self, message: str, time_index: int | None = None):
        super().__init__(message)
        self.time_index = time_index


class ConvexityError(FracLabError):
    """A payoff claimed convex is not convex on the sampled price range."""

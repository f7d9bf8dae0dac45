"""Exception types raised across the package."""


class ForklatError(Exception):
    """Base class for all package errors."""


class NonFiniteMoment(ForklatError):
    """A requested order-statistic moment diverges for the given distribution."""


class Unstable(ForklatError):
    """Arrival rate is at or beyond the stability threshold of the model."""


class IndivisibleGroup(ForklatError):
    """Group-based dispatch needs the group size to divide the server count."""


class InsufficientSamples(ForklatError):
    """Too few samples to form a trustworthy estimate."""


class ConfigInvalid(ForklatError):
    """A system or experiment configuration violates its invariants."""


class Infeasible(ForklatError):
    """No redundancy level satisfies the cost budget.

    ``min_cost`` holds the smallest estimated cost over the searched range so
    the caller knows how far to raise the budget.
    """

    def __init__(self, message: str, min_cost: float):
        super().__init__(message)
        self.min_cost = min_cost


class DistSpecError(ForklatError, ValueError):
    """A distribution spec string could not be parsed."""

"""Exception types shared across the package.

The CLI maps these onto exit codes: DataError -> 3, InfeasibleError -> 4,
anything else -> 5 (usage errors exit 2 via argparse).
"""


class CrowdPricerError(Exception):
    """Base class for all errors raised by this package."""


class DataError(CrowdPricerError):
    """Malformed or inconsistent input data (CSV parse errors, bad lookups)."""


class InfeasibleError(CrowdPricerError):
    """The requested optimization has no feasible answer."""


class CapacityError(CrowdPricerError):
    """The instance exceeds a configured work cap."""


class LowRatePremiseWarning(UserWarning):
    """The fixed-rate tradeoff premise (at most one completion per interval)
    is strained because max lambda*p(c) exceeds 0.2."""

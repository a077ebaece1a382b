"""Exception taxonomy shared across the package.

ValidationError marks bad user input (malformed files, inconsistent
parameters); everything else signals a numerical failure discovered while
processing otherwise well-formed input. The CLI maps the former to exit
code 1 and the latter to exit code 2.
"""


class HjmkitError(Exception):
    """Base class for all package errors."""


class ValidationError(HjmkitError):
    """Input violates a documented precondition or format."""


class InfeasibleCurveError(HjmkitError):
    """Quote system admits no consistent monthly curve."""

    def __init__(self, message, conflicts=None):
        super().__init__(message)
        self.conflicts = list(conflicts) if conflicts else []


class CalibrationError(HjmkitError):
    """Covariance or factor extraction failed."""


class SimulationError(HjmkitError):
    """Simulated paths breached a sanity bound."""


class PricingError(HjmkitError):
    """Valuation left its arbitrage or Monte Carlo bounds."""

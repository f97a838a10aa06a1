"""Error types shared across the package.

Every failure mode that callers are expected to branch on gets its own
class; the CLI maps these onto process exit codes.
"""


class InputError(ValueError):
    """Bad argument: dimension mismatch, non-unit frequency, empty input."""


class IntegrationError(RuntimeError):
    """State became non-finite during time stepping.

    Carries the last time at which the state was still finite.
    """

    def __init__(self, message, last_good_time=None):
        super().__init__(message)
        self.last_good_time = last_good_time


class ConditioningError(RuntimeError):
    """A propagator became numerically singular (QR diagonal underflow)."""


class UnsupportedOracleError(ValueError):
    """The requested closed form is not available for this oracle kind."""

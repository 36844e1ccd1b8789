"""Exception types raised across the package."""


class InterpGapError(Exception):
    """Base class for all package errors."""


class DimensionError(InterpGapError, ValueError):
    """Array shapes disagree with the problem dimensions."""


class RankError(InterpGapError, ValueError):
    """A Gram system is singular or too ill-conditioned to solve."""


class NumericalError(InterpGapError, RuntimeError):
    """An iterative routine failed to converge.

    ``diagnostics`` carries the iterate state at the point of failure.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class PreconditionError(InterpGapError, ValueError):
    """An input violates an operation's stated precondition."""


class InfeasibleBudgetError(PreconditionError):
    """Norm budget is smaller than the minimum-norm interpolator."""


class DomainError(InterpGapError, ValueError):
    """A formula is evaluated outside the range where it is defined."""


class UnsupportedDimensionError(InterpGapError, ValueError):
    """Brute-force oracle asked for a kernel dimension it cannot enumerate."""


class MonteCarloError(InterpGapError, RuntimeError):
    """One or more Monte Carlo trials raised.

    ``failures`` maps trial index to the exception it raised.
    """

    def __init__(self, failures):
        self.failures = dict(failures)
        idx = sorted(self.failures)
        first = self.failures[idx[0]]
        super().__init__(
            f"{len(idx)} trial(s) failed: indices {idx[:20]}"
            f"{' ...' if len(idx) > 20 else ''}; first error: {first!r}"
        )

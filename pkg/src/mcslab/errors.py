"""Exception types raised across the package.

``ConfigError`` maps to CLI exit code 2; everything deriving from
``NumericalError`` maps to exit code 3.
"""


class McsError(Exception):
    """Base class for all package errors."""


class ConfigError(McsError, ValueError):
    """An experiment spec could not be resolved.

    ``key_path`` names the offending entry, e.g. ``"market.sigma_r"``.
    """

    def __init__(self, message, key_path=None):
        self.key_path = key_path
        if key_path:
            message = f"{key_path}: {message}"
        super().__init__(message)


class DomainError(McsError, ValueError):
    """A time or state argument lies outside the model domain."""


class InvalidGridError(McsError, ValueError):
    """A time or rate grid is malformed."""


class BreakpointError(McsError, ValueError):
    """A derivative was requested at a discontinuity of a curve."""


class PreferenceError(McsError, ValueError):
    """Invalid CRRA preference parameters."""


class NumericalError(McsError, ArithmeticError):
    """Base class for failures of a numerical procedure."""


class SingularVolatilityError(NumericalError):
    def __init__(self, t, cond=None):
        self.t = t
        self.cond = cond
        msg = f"volatility matrix singular at t={t!r}"
        if cond is not None:
            msg += f" (condition number {cond:.3g})"
        super().__init__(msg)


class RuleError(NumericalError):
    """A consumption rule produced a non-positive factor before the horizon."""


class NumericalBlowupError(NumericalError):
    def __init__(self, message, path_id=None, t=None):
        self.path_id = path_id
        self.t = t
        super().__init__(message)


class NonlinearIterationError(NumericalError):
    def __init__(self, step, residual, t=None):
        self.step = step
        self.residual = residual
        self.t = t
        super().__init__(
            f"Picard iteration did not converge at time step {step} "
            f"(t={t}, last update {residual:.3e})"
        )


class PositivityLossError(NumericalError):
    """The factor surface became non-positive before the horizon.

    ``slice`` holds the offending time row for inspection.
    """

    def __init__(self, step, t, slice_values):
        self.step = step
        self.t = t
        self.slice = slice_values
        super().__init__(
            f"factor surface lost positivity at time step {step} (t={t}); "
            f"min value {min(slice_values):.3e}"
        )


class SpanningError(NumericalError):
    """The bond does not span interest-rate risk at some node."""


class DegenerateReturnError(NumericalError):
    """A conditional expectation of gross returns vanished in a tree."""

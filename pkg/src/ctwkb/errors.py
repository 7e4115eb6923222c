"""Exception hierarchy shared across the package."""


class CTMError(Exception):
    """Base class for all package errors."""


class InvalidInputError(CTMError, ValueError):
    """Non-finite or otherwise malformed input."""


class CapabilityError(CTMError, ValueError):
    """Request outside what the implementation supports (e.g. order too high)."""


class ContractError(CTMError, ValueError):
    """Arguments that do not conform to each other (e.g. state vs layout)."""


class HierarchyInternalError(CTMError, RuntimeError):
    """The derivative recurrence referenced a slot missing from the layout."""


class DivergenceError(CTMError, ArithmeticError):
    """A trajectory blew up before reaching its final time."""

    def __init__(self, message, t_blowup=None):
        super().__init__(message)
        self.t_blowup = t_blowup


class NonConvergenceError(CTMError, RuntimeError):
    """An iterative procedure exhausted its budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CausticError(CTMError, ArithmeticError):
    """Trajectory Jacobian vanished, so Newton cannot proceed."""


class AliasingError(CTMError, RuntimeError):
    """The grid wavefunction reached the box edges."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class UndefinedMetricError(CTMError, ValueError):
    """No sample points survive the error-metric floor."""


class ConfigError(CTMError, ValueError):
    """Run configuration failed validation."""

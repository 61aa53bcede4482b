"""Exception hierarchy.

Everything raised for a physically or numerically invalid request derives from
:class:`HeraldsimError` (CLI exit code 1). Malformed configuration raises
:class:`ConfigError` (exit code 2).
"""


class HeraldsimError(Exception):
    """Base class for domain errors."""


class ConfigError(Exception):
    """Invalid or incomplete configuration."""


class ParameterError(HeraldsimError, ValueError):
    """A parameter violates its documented invariant."""


class QuadratureError(HeraldsimError):
    """Non-finite integrand sample in a Doppler average."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class ConvergenceError(HeraldsimError):
    """Spectral grid did not converge within the allowed refinements."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class GridRangeError(HeraldsimError):
    """A half-maximum crossing lies outside the sampled grid."""


class FitError(HeraldsimError):
    """Least-squares fit did not converge."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class CalibrationError(HeraldsimError):
    """Calibration constants produce an unphysical heralding probability."""


class UndefinedSBRError(HeraldsimError, ZeroDivisionError):
    """SBR is undefined because R_b * dtau vanishes."""

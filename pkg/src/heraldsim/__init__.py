"""Heralded biphoton source model: double-Lambda SFWM correlation function,
heralding / quality-factor metrics, an event-level coincidence simulator and
a constrained operating-point search."""

__version__ = "0.1.0"

from heraldsim.errors import (
    CalibrationError,
    ConfigError,
    ConvergenceError,
    FitError,
    GridRangeError,
    HeraldsimError,
    ParameterError,
    QuadratureError,
    UndefinedSBRError,
)
from heraldsim.optical_response import PhysicalParams, QuadratureSpec
from heraldsim.wavepacket import (
    CalibrationParams,
    GridSpec,
    SpectrumSamples,
    WavePacket,
    correlation_function,
)

__all__ = [
    "__version__",
    "CalibrationError",
    "CalibrationParams",
    "ConfigError",
    "ConvergenceError",
    "FitError",
    "GridRangeError",
    "GridSpec",
    "HeraldsimError",
    "ParameterError",
    "PhysicalParams",
    "QuadratureError",
    "QuadratureSpec",
    "SpectrumSamples",
    "UndefinedSBRError",
    "WavePacket",
    "correlation_function",
]

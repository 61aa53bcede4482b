"""Unit conventions.

Internally every angular frequency is expressed in units of the excited-state
decay rate Gamma (Gamma = 1) and every time in units of 1/Gamma. Conversions to
laboratory units happen only at the I/O boundary.
"""

import math

#: Gamma / 2pi in Hz.
GAMMA_OVER_2PI_HZ = 6.0e6
#: Gamma in rad/s.
GAMMA_RAD_PER_S = 2.0 * math.pi * GAMMA_OVER_2PI_HZ
#: 1/Gamma in seconds (about 26.526 ns).
GAMMA_INV_S = 1.0 / GAMMA_RAD_PER_S


def hz_to_gamma(frequency_hz):
    """Ordinary frequency (Hz) -> angular frequency in Gamma units."""
    return frequency_hz / GAMMA_OVER_2PI_HZ


def ghz_to_gamma(frequency_ghz):
    return hz_to_gamma(frequency_ghz * 1e9)


def mhz_to_gamma(frequency_mhz):
    return hz_to_gamma(frequency_mhz * 1e6)


def gamma_to_mhz(value):
    """Angular frequency in Gamma units -> ordinary frequency in MHz."""
    return value * GAMMA_OVER_2PI_HZ / 1e6


def gamma_to_ghz(value):
    return value * GAMMA_OVER_2PI_HZ / 1e9


def tau_to_seconds(tau):
    """Time in 1/Gamma -> seconds."""
    return tau * GAMMA_INV_S


def seconds_to_tau(seconds):
    return seconds / GAMMA_INV_S

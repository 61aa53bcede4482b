"""One-axis sweeps of the heralding probabilities.

Each sweep point is a dict of settings; powers are mapped to Rabi frequencies
with the search calibration unless a Rabi frequency is given directly (the
sweep presets fix Omega_c = 12 for pump sweeps and Omega_p = 4 for coupling
sweeps). gamma may be given per point.
"""

from dataclasses import dataclass, replace
import math

from heraldsim.metrics import probe_heralding, signal_heralding
from heraldsim.optical_response import PhysicalParams
from heraldsim.search import (
    COUPLING_RABI_PER_SQRT_MW,
    PUMP_RABI_PER_SQRT_MW,
    default_noise_model,
    theory_summary,
)
from heraldsim import units
from heraldsim.errors import ParameterError
from heraldsim.wavepacket import CalibrationParams, GridSpec

SWEEP_AXES = ("pump_power", "delta_pump", "coupling_power", "delta_coupling")

# settings keys understood by params_from_settings; frequencies in Gamma, powers in mW
_DIRECT = ("alpha", "impurity_fraction", "gamma_doppler", "gamma_etalon", "omega_pump",
           "omega_coupling", "delta_pump", "delta_coupling", "gamma_decoherence")


def params_from_settings(settings, base=None):
    base = base or PhysicalParams()
    changes = {k: settings[k] for k in _DIRECT if k in settings}
    if "omega_pump" not in settings and "pump_power" in settings:
        changes["omega_pump"] = PUMP_RABI_PER_SQRT_MW * math.sqrt(settings["pump_power"])
    if "omega_coupling" not in settings and "coupling_power" in settings:
        changes["omega_coupling"] = COUPLING_RABI_PER_SQRT_MW * math.sqrt(settings["coupling_power"])
    return replace(base, **changes)


@dataclass(frozen=True)
class SweepRow:
    value: float
    pump_ratio: float
    h_signal: float
    h_probe: float
    rate_biphoton: float
    noise_rate_probe: float
    gamma: float


def run_sweep(fixed, axis, values, gammas=None, cal=None, noise_model=None, base=None, grid=None):
    """h_s and h_p along ``axis``; ``fixed`` holds the other settings.

    ``pump_ratio`` is Omega_p^2/Delta_p^2, the single variable on which both
    probabilities depend when the pump factor leaves the Doppler average.
    """
    if axis not in SWEEP_AXES:
        raise ParameterError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    cal = cal or CalibrationParams()
    noise_model = noise_model or default_noise_model()
    grid = grid or GridSpec(delta_count=2**14)
    if gammas is None:
        gammas = [fixed.get("gamma_decoherence", 0.012)] * len(values)
    elif isinstance(gammas, (int, float)):
        gammas = [float(gammas)] * len(values)
    if len(gammas) != len(values):
        raise ParameterError("need one gamma per sweep value")
    rows = []
    for v, g in zip(values, gammas):
        settings = dict(fixed)
        settings[axis] = v
        settings["gamma_decoherence"] = g
        params = params_from_settings(settings, base)
        area, _, _ = theory_summary(params, grid)
        rate = cal.rate_proportionality * area
        noise = noise_model.rate(params)
        rows.append(SweepRow(
            value=v,
            pump_ratio=params.omega_pump**2 / params.delta_pump**2,
            h_signal=signal_heralding(rate, params, cal),
            h_probe=probe_heralding(rate, noise),
            rate_biphoton=rate,
            noise_rate_probe=noise,
            gamma=g,
        ))
    return rows


def preset(name):
    """Fixed settings and axis values of the four reference sweeps (internal units)."""
    ghz = units.ghz_to_gamma
    if name == "pump_power":
        fixed = {"omega_coupling": 12.0, "delta_pump": ghz(2.90), "delta_coupling": ghz(1.00),
                 "impurity_fraction": 0.375}
        return fixed, "pump_power", [1.0, 2.0, 3.5, 5.5, 7.5, 9.0, 11.0]
    if name == "delta_pump":
        fixed = {"omega_coupling": 12.0, "pump_power": 2.0, "delta_coupling": ghz(1.00),
                 "impurity_fraction": 0.375}
        return fixed, "delta_pump", [ghz(v) for v in (1.4, 1.9, 2.4, 2.9, 3.4)]
    if name == "coupling_power":
        fixed = {"omega_pump": 4.0, "delta_pump": ghz(1.90), "delta_coupling": ghz(1.00),
                 "impurity_fraction": 0.375}
        return fixed, "coupling_power", [3.0, 6.0, 9.0, 13.0, 17.0, 21.0, 25.0, 30.0, 36.0]
    if name == "delta_coupling":
        fixed = {"omega_pump": 4.0, "delta_pump": ghz(1.90), "coupling_power": 35.0,
                 "impurity_fraction": 0.315}
        return fixed, "delta_coupling", [ghz(v) for v in (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)]
    raise ParameterError(f"unknown sweep preset {name!r}")


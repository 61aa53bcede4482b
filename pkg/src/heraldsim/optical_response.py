"""Doppler-broadened response functions of the double-Lambda medium.

All quantities are in internal units (Gamma = 1). The four response functions
of the two-photon detuning ``delta`` are

* ``cross_susceptibility``            -- kappa(delta), pump/coupling FWM term
* ``probe_self_susceptibility_eit``   -- rho_c(delta), EIT atoms
* ``probe_self_susceptibility_impurity`` -- rho_m(delta), non-EIT atoms
* ``etalon_response``                 -- B(delta), two cascaded etalon pairs

The Doppler integrals share the weight exp(-w^2/G_D^2)/(sqrt(pi) G_D). Each
integrand is rational in the Doppler shift w, so after partial fractions it
reduces to Gaussian averages of simple poles,

    < 1/(w - z) > = -i sqrt(pi)/G_D * wofz(-z/G_D)      (Im z < 0)
                  = +i sqrt(pi)/G_D * wofz(+z/G_D)      (Im z > 0)

which is what the default ``method="exact"`` evaluates. Gauss-Hermite
quadrature is kept as an alternative path through :func:`doppler_average`.
"""

from dataclasses import dataclass, replace
import math

import numpy as np
from scipy.special import roots_hermite, wofz

from heraldsim.errors import ParameterError, QuadratureError

_SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class PhysicalParams:
    """Atomic and field parameters, angular frequencies in units of Gamma.

    Defaults are the reference operating point of the hot-vapor source: OD 500,
    impurity fraction 0.375, Doppler width 54, etalon FWHM 8.9, coupling Rabi
    frequency 12, decoherence 0.012, pump 5.5 mW (2.8*sqrt(5.5)) detuned
    1.90 GHz, coupling detuned 1.00 GHz.
    """

    alpha: float = 500.0
    impurity_fraction: float = 0.375
    gamma_doppler: float = 54.0
    omega_pump: float = 2.8 * math.sqrt(5.5)
    omega_coupling: float = 12.0
    delta_pump: float = 1900.0 / 6.0
    delta_coupling: float = 1000.0 / 6.0
    gamma_decoherence: float = 0.012
    gamma_etalon: float = 8.9
    gamma_natural: float = 1.0

    def __post_init__(self):
        checks = [
            (self.alpha > 0, "alpha must be > 0"),
            (0.0 <= self.impurity_fraction <= 1.0, "impurity_fraction must lie in [0, 1]"),
            (self.gamma_doppler > 0, "gamma_doppler must be > 0"),
            (self.gamma_decoherence >= 0, "gamma_decoherence must be >= 0"),
            (self.gamma_etalon > 0, "gamma_etalon must be > 0"),
            (self.omega_pump >= 0, "omega_pump must be >= 0"),
            (self.omega_coupling > 0, "omega_coupling must be > 0"),
            (self.gamma_natural > 0, "gamma_natural must be > 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ParameterError(message)
        for name in ("delta_pump", "delta_coupling"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(f"{name} must be finite")

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class QuadratureSpec:
    """How the Doppler integral is discretised.

    ``method`` is ``"exact"`` (Faddeeva closed form) or ``"gauss-hermite"``.
    ``truncation`` is the half-range, in units of G_D, used by finite-range
    integrators.
    """

    node_count: int = 256
    truncation: float = 6.0
    method: str = "exact"

    def __post_init__(self):
        if int(self.node_count) != self.node_count or self.node_count < 16:
            raise ParameterError("node_count must be an integer >= 16")
        if self.truncation <= 0:
            raise ParameterError("truncation must be > 0")
        if self.method not in ("exact", "gauss-hermite"):
            raise ParameterError(f"unknown quadrature method {self.method!r}")


DEFAULT_QUAD = QuadratureSpec()


def _hermite_rule(n):
    x, w = roots_hermite(n)
    return x, w / _SQRT_PI


def doppler_average(f, params, quad=None):
    """Gaussian Doppler average of ``f``.

    Returns ``int f(w) exp(-w^2/G_D^2)/(sqrt(pi) G_D) dw`` by Gauss-Hermite
    quadrature after the substitution ``w = G_D x``. ``f`` is called once with
    the array of Doppler shifts; it may return an array with trailing node axis
    (shape ``(..., n)``) to average several integrands at once.
    """
    quad = quad or DEFAULT_QUAD
    x, w = _hermite_rule(quad.node_count)
    nodes = params.gamma_doppler * x
    values = np.asarray(f(nodes), dtype=complex)
    if values.shape == ():
        values = np.full(nodes.shape, values)
    bad = ~np.isfinite(values)
    if bad.any():
        idx = np.argwhere(bad)[0]
        node = float(nodes[idx[-1]])
        raise QuadratureError(f"non-finite integrand at Doppler shift {node!r}", node=node)
    result = values @ w
    return complex(result) if np.ndim(result) == 0 else result


def doppler_pole_mean(z, gamma_doppler):
    """Doppler average of ``1/(w - z)`` for complex ``z`` off the real axis."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag == 0):
        raise QuadratureError("pole on the real axis; the Doppler average is a principal value")
    lower = z.imag < 0
    u = np.where(lower, -z, z) / gamma_doppler
    value = 1j * _SQRT_PI / gamma_doppler * wofz(u)
    return np.where(lower, -value, value)


def _doppler_pole_pair_mean(z1, z2, gamma_doppler):
    """Doppler average of ``1/((w - z1)(w - z2))``, both poles below the axis."""
    dz = z1 - z2
    scale = gamma_doppler + np.abs(z1)
    near = np.abs(dz) < 1e-6 * scale
    safe_dz = np.where(near, 1.0, dz)
    split = (doppler_pole_mean(z1, gamma_doppler) - doppler_pole_mean(z2, gamma_doppler)) / safe_dz
    # coincident poles: derivative of the single-pole mean at the midpoint
    zm = 0.5 * (z1 + z2)
    u = -zm / gamma_doppler
    wu = wofz(u)
    dw = -2.0 * u * wu + 2j / _SQRT_PI
    merged = 1j * _SQRT_PI * dw / gamma_doppler**2
    return np.where(near, merged, split)


def _eit_pole(delta, p):
    """Pole in w of the EIT denominator and the prefactor a = delta + i*gamma.

    Omega_c^2 - 4 a (delta + Delta_c + w + i G/2) = -4 a (w - z_e).
    """
    a = delta + 1j * p.gamma_decoherence
    safe_a = np.where(a == 0, 1.0, a)
    z_e = p.omega_coupling**2 / (4.0 * safe_a) - delta - p.delta_coupling - 0.5j * p.gamma_natural
    return a, z_e


def _eit_denominator(delta, w, p):
    return p.omega_coupling**2 - 4.0 * (delta + 1j * p.gamma_decoherence) * (
        delta + p.delta_coupling + w + 0.5j * p.gamma_natural
    )


def _as_output(values, delta):
    return complex(values) if np.ndim(delta) == 0 else values


def cross_susceptibility(delta, params, quad=None, *, pump_factorized=False):
    """kappa(delta): quantity proportional to the signal-probe cross-susceptibility.

    ``(1-b) alpha/4 * < Omega_p/(Delta_p + w + iG/2) * Omega_c G / D(w) >`` with
    D the EIT denominator. With ``pump_factorized=True`` the pump factor is
    pulled out of the Doppler average as ``Omega_p/Delta_p`` (valid for
    ``Delta_p >> G_D``).
    """
    quad = quad or DEFAULT_QUAD
    p = params
    d = np.asarray(delta, dtype=float)
    pref = (1.0 - p.impurity_fraction) * p.alpha / 4.0
    G = p.gamma_natural
    if quad.method == "gauss-hermite":
        def integrand(w):
            dd = d[..., None]
            eit = p.omega_coupling * G / _eit_denominator(dd, w, p)
            if pump_factorized:
                return eit * (p.omega_pump / p.delta_pump)
            return eit * p.omega_pump / (p.delta_pump + w + 0.5j * G)

        return _as_output(pref * doppler_average(integrand, p, quad), delta)

    a, z_e = _eit_pole(d, p)
    z_p = -p.delta_pump - 0.5j * G
    if pump_factorized:
        core = (p.omega_pump / p.delta_pump) * doppler_pole_mean(z_e, p.gamma_doppler)
        # a == 0: EIT factor reduces to G/Omega_c, constant in w
        at_zero = (p.omega_pump / p.delta_pump) * G / p.omega_coupling
        body = np.where(a == 0, at_zero, p.omega_coupling * G / (-4.0 * np.where(a == 0, 1.0, a)) * core)
    else:
        pair = _doppler_pole_pair_mean(np.broadcast_to(z_p, z_e.shape), z_e, p.gamma_doppler)
        at_zero = p.omega_pump * G / p.omega_coupling * doppler_pole_mean(z_p, p.gamma_doppler)
        body = np.where(
            a == 0,
            at_zero,
            p.omega_pump * p.omega_coupling * G / (-4.0 * np.where(a == 0, 1.0, a)) * pair,
        )
    return _as_output(pref * body, delta)


def probe_self_susceptibility_eit(delta, params, quad=None):
    """rho_c(delta): probe self-susceptibility of the EIT atoms."""
    quad = quad or DEFAULT_QUAD
    p = params
    d = np.asarray(delta, dtype=float)
    pref = (1.0 - p.impurity_fraction) * p.alpha / 2.0
    G = p.gamma_natural
    if quad.method == "gauss-hermite":
        def integrand(w):
            dd = d[..., None]
            return (dd + 1j * p.gamma_decoherence) * G / _eit_denominator(dd, w, p)

        return _as_output(pref * doppler_average(integrand, p, quad), delta)

    a, z_e = _eit_pole(d, p)
    body = np.where(a == 0, 0.0, -0.25 * G * doppler_pole_mean(z_e, p.gamma_doppler))
    return _as_output(pref * body, delta)


def probe_self_susceptibility_impurity(delta, params, quad=None):
    """rho_m(delta): probe self-susceptibility of the non-EIT (impurity) atoms."""
    quad = quad or DEFAULT_QUAD
    p = params
    d = np.asarray(delta, dtype=float)
    pref = p.impurity_fraction * p.alpha / 2.0
    G = p.gamma_natural
    if quad.method == "gauss-hermite":
        def integrand(w):
            dd = d[..., None]
            return G / (4.0 * (dd + p.delta_coupling + w + 0.5j * G))

        return _as_output(pref * doppler_average(integrand, p, quad), delta)

    z_m = -(d + p.delta_coupling + 0.5j * G)
    return _as_output(pref * 0.25 * G * doppler_pole_mean(z_m, p.gamma_doppler), delta)


def etalon_response(delta, params):
    """B(delta) = (1 + 2i delta/G_e)^-4."""
    d = np.asarray(delta, dtype=float)
    out = (1.0 / (1.0 + 2j * d / params.gamma_etalon)) ** 4
    return _as_output(out, delta)


def off_resonant_excitation(detuning, params):
    """Doppler-averaged Lorentzian ``(G/2)^2 / ((detuning + w)^2 + (G/2)^2)``.

    Relative one-photon scattering rate of a field at one-photon ``detuning``;
    equals 1 on resonance without Doppler broadening.
    """
    half = 0.5 * params.gamma_natural
    z = -np.asarray(detuning, dtype=float) + 1j * half
    return half * doppler_pole_mean(z, params.gamma_doppler).imag

"""Two-photon correlation function and the quantities extracted from it.

The time-domain biphoton amplitude is the inverse Fourier transform of

    I(delta) = kappa(delta) * sinc(rho) * exp(i rho) * B(-delta),   rho = rho_c + rho_m

and G2(tau) = |psi(tau)|^2 with psi(tau) = int d(delta) exp(-i delta tau)/(2 pi) I(delta).
The filter enters as B(-delta) = conj B(delta): with this transform kernel
B(delta) itself has its poles in the upper half-plane and would respond before
it is driven, while the medium terms respond causally. Conjugating B keeps the
filter causal and leaves |I|^2, and hence the spectrum and int G2, unchanged.
Everything here works in internal units (Gamma = 1, times in 1/Gamma) except
where a function says otherwise.
Everything here works in internal units (Gamma = 1, times in 1/Gamma) except
where a function says otherwise.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import least_squares

from heraldsim import units
from heraldsim.errors import ConvergenceError, FitError, GridRangeError, ParameterError
from heraldsim.optical_response import (
    DEFAULT_QUAD,
    PhysicalParams,
    cross_susceptibility,
    etalon_response,
    probe_self_susceptibility_eit,
    probe_self_susceptibility_impurity,
)

# Adjacent point samples differing by more than this fraction of the peak are
# treated as an unresolved discontinuity (square edge, exponential onset).
_STEP_FRACTION = 0.5
_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Detuning grid for the Fourier inversion.

    The delta grid is ``[-delta_range, delta_range)`` with ``delta_count``
    points, so the tau spacing is ``pi/delta_range`` and the tau window is
    ``delta_count`` times that. ``tau_range`` crops the returned packet.
    Up to ``max_doublings`` automatic refinements are attempted until peak and
    FWHM move by less than ``tolerance`` and the tau spacing is at most FWHM/50.
    """

    delta_range: float = 40.0
    delta_count: int = 2**16
    tau_range: tuple = (-40.0, 160.0)
    tolerance: float = 5e-3
    max_doublings: int = 3
    check_convergence: bool = True

    def __post_init__(self):
        n = int(self.delta_count)
        if n != self.delta_count or n < 16 or n & (n - 1):
            raise ParameterError("delta_count must be a power of two >= 16")
        if not self.delta_range > 0:
            raise ParameterError("delta_range must be > 0")
        if self.tau_range is not None:
            lo, hi = self.tau_range
            if not lo < hi:
                raise ParameterError("tau_range must satisfy lo < hi")

    @property
    def tau_step(self):
        return math.pi / self.delta_range

    def doubled(self, which):
        if which == "count":
            return GridSpec(self.delta_range, 2 * self.delta_count, self.tau_range,
                            self.tolerance, self.max_doublings, False)
        return GridSpec(2 * self.delta_range, 2 * self.delta_count, self.tau_range,
                        self.tolerance, self.max_doublings, False)


@dataclass(frozen=True)
class SpectrumSamples:
    detuning_grid: np.ndarray
    magnitude: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.magnitude) < 0):
            raise ParameterError("spectrum magnitude must be non-negative")


@dataclass(frozen=True)
class WavePacket:
    """Sampled G2(tau) with its peak and FWHM.

    ``sampling`` is ``"point"`` for values at the grid times (theory) and
    ``"bin"`` for bin-integrated values such as a coincidence histogram; it
    controls how unresolved edges are handled by the extractors.
    """

    tau_grid: np.ndarray
    values: np.ndarray
    peak_time: float = field(default=None)
    fwhm: float = field(default=None)
    peak_value: float = field(default=None)
    sampling: str = "point"
    amplitude: np.ndarray = field(default=None, repr=False)
    detuning_grid: np.ndarray = field(default=None, repr=False)
    integrand: np.ndarray = field(default=None, repr=False)
    params: PhysicalParams = None

    def __post_init__(self):
        t = np.asarray(self.tau_grid, dtype=float)
        y = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != y.shape or t.size < 3:
            raise ParameterError("tau_grid and values must be equal-length 1-D arrays")
        if np.any(y < 0):
            raise ParameterError("wave packet values must be non-negative")
        if self.sampling not in ("point", "bin"):
            raise ParameterError("sampling must be 'point' or 'bin'")
        object.__setattr__(self, "tau_grid", t)
        object.__setattr__(self, "values", y)
        if self.peak_time is None or self.fwhm is None or self.peak_value is None:
            t0, width, peak = _peak_and_width(t, y, self.sampling)
            object.__setattr__(self, "peak_time", t0)
            object.__setattr__(self, "fwhm", width)
            object.__setattr__(self, "peak_value", peak)

    @property
    def step(self):
        return float(self.tau_grid[1] - self.tau_grid[0])

    def scaled(self, factor):
        amp = None if self.amplitude is None else self.amplitude * math.sqrt(factor)
        integ = None if self.integrand is None else self.integrand * math.sqrt(factor)
        return WavePacket(self.tau_grid, self.values * factor, self.peak_time, self.fwhm,
                          self.peak_value * factor, self.sampling, amp, self.detuning_grid,
                          integ, self.params)


@dataclass(frozen=True)
class CalibrationParams:
    """Rate proportionalities and detection efficiencies.

    ``R_b = A * int G2 dtau`` with G2 in internal units, and
    ``h_s = R_b / (B Omega_p^2/(4 Delta_p^2))``. Only ``A/B`` enters h_s.
    The defaults anchor A so the reference operating point produces
    7.5e5 pairs/s, and A/B so that it has h_s = 0.83.
    """

    rate_proportionality: float = 1.5317097e8
    pump_rate_proportionality: float = 1.5317097e8 / 1.8222475e-2
    detection_eff_signal: float = 1.0
    detection_eff_probe: float = 1.0

    def __post_init__(self):
        if not (self.rate_proportionality > 0 and self.pump_rate_proportionality > 0):
            raise ParameterError("A and B must be > 0")
        for d in (self.detection_eff_signal, self.detection_eff_probe):
            if not 0 < d <= 1:
                raise ParameterError("detection efficiencies must lie in (0, 1]")

    @property
    def a_over_b(self):
        return self.rate_proportionality / self.pump_rate_proportionality

    @classmethod
    def from_ratio(cls, a, a_over_b, detection_eff_signal=1.0, detection_eff_probe=1.0):
        return cls(a, a / a_over_b, detection_eff_signal, detection_eff_probe)


def complex_sinc(z):
    """sin(z)/z for complex z, with a series branch near zero."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, z)
    z2 = z * z
    return np.where(small, 1 - z2 / 6 + z2 * z2 / 120, np.sin(safe) / safe)


def biphoton_integrand(delta, params, quad=None, *, pump_factorized=False, causal_filter=True):
    """I(delta): the spectral amplitude that is Fourier-inverted into psi(tau).

    ``causal_filter=False`` uses B(delta) unconjugated, which mirrors the
    filter's time response to negative delays.
    """
    quad = quad or DEFAULT_QUAD
    kappa = cross_susceptibility(delta, params, quad, pump_factorized=pump_factorized)
    rho = probe_self_susceptibility_eit(delta, params, quad) + probe_self_susceptibility_impurity(
        delta, params, quad
    )
    filt = etalon_response(-np.asarray(delta, dtype=float) if causal_filter else delta, params)
    return kappa * complex_sinc(rho) * np.exp(1j * rho) * filt


def _invert(params, quad, grid, pump_factorized):
    L = grid.delta_range
    n = grid.delta_count
    dd = 2 * L / n
    delta = -L + dd * np.arange(n)
    integ = biphoton_integrand(delta, params, quad, pump_factorized=pump_factorized)
    tau = 2 * np.pi * np.fft.fftfreq(n, dd)
    psi = np.fft.fft(integ) * (dd / (2 * np.pi)) * np.exp(1j * L * tau)
    order = np.argsort(tau, kind="stable")
    return delta, integ, tau[order], psi[order]


def _crop(tau, psi, tau_range):
    if tau_range is None:
        return tau, psi
    lo, hi = tau_range
    keep = (tau >= lo) & (tau <= hi)
    return tau[keep], psi[keep]


def _build(params, quad, grid, pump_factorized):
    delta, integ, tau, psi = _invert(params, quad, grid, pump_factorized)
    tau, psi = _crop(tau, psi, grid.tau_range)
    g2 = np.abs(psi) ** 2
    if not np.any(g2 > 0):
        raise GridRangeError("G2 vanishes on the whole tau window")
    return WavePacket(tau, g2, sampling="point", amplitude=psi, detuning_grid=delta,
                      integrand=integ, params=params)


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def correlation_function(params, quad=None, grid_spec=None, *, pump_factorized=False):
    """G2(tau) for ``params`` on a converged grid.

    Convergence is tested by comparing against a grid with doubled delta count
    (longer tau window) and one with doubled delta range (finer tau spacing).
    The grid is refined until both comparisons agree to ``tolerance`` in peak
    value and FWHM, or ``ConvergenceError`` is raised.
    """
    quad = quad or DEFAULT_QUAD
    grid = grid_spec or GridSpec()
    wp = _build(params, quad, grid, pump_factorized)
    if not grid.check_convergence:
        return wp
    history = []
    for _ in range(grid.max_doublings + 1):
        if wp.step > wp.fwhm / 50:
            history.append({"delta_range": grid.delta_range, "reason": "tau step > fwhm/50"})
            grid = grid.doubled("range")
            wp = _build(params, quad, grid, pump_factorized)
            continue
        changes = {}
        finer = None
        for which in ("count", "range"):
            other = _build(params, quad, grid.doubled(which), pump_factorized)
            changes[which] = max(_rel(other.peak_value, wp.peak_value), _rel(other.fwhm, wp.fwhm))
            if which == "range":
                finer = other
        history.append({"delta_range": grid.delta_range, "delta_count": grid.delta_count, **changes})
        if max(changes.values()) < grid.tolerance:
            return wp
        grid = grid.doubled("range")
        wp = finer
    raise ConvergenceError("wave packet did not converge under grid doubling", diagnostics=history)


def _peak_index(y):
    top = y.max()
    return int(np.flatnonzero(y >= top * (1 - _TIE_RTOL))[0])


def _refined_peak(t, y, i):
    n = y.size
    if 0 < i < n - 1:
        half = 0.5 * y[i]
        a, b, c = y[i - 1], y[i], y[i + 1]
        den = a - 2 * b + c
        if a >= half and c >= half and den < 0:
            off = 0.5 * (a - c) / den
            return t[i] + off * (t[1] - t[0]), b - 0.25 * (a - c) * off
    return float(t[i]), float(y[i])


def _crossing(t, y, i, half, direction, step_rule, peak):
    j = i
    n = y.size
    while 0 <= j + direction < n and y[j + direction] >= half:
        j += direction
    k = j + direction
    if not 0 <= k < n:
        raise GridRangeError("no half-maximum crossing inside the tau grid")
    hi, lo = y[j], y[k]
    if step_rule and hi - lo > _STEP_FRACTION * peak:
        return float(t[j])
    frac = (hi - half) / (hi - lo)
    return float(t[j] + frac * (t[k] - t[j]))


def _peak_and_width(t, y, sampling):
    i = _peak_index(y)
    t0, peak = _refined_peak(t, y, i)
    half = 0.5 * peak
    step_rule = sampling == "point"
    left = _crossing(t, y, i, half, -1, step_rule, peak)
    right = _crossing(t, y, i, half, +1, step_rule, peak)
    return float(t0), right - left, float(peak)


def temporal_fwhm(wp):
    """(peak_time, fwhm) of the main lobe, in the packet's time units."""
    return wp.peak_time, wp.fwhm


def packet_integral(wp):
    """Area under the packet.

    Point samples use the trapezoid rule with unresolved steps corrected to
    their high side; bin samples are summed.
    """
    y = wp.values
    h = wp.step
    if wp.sampling == "bin":
        return float(y.sum() * h)
    area = float(trapezoid(y, dx=h))
    jumps = np.abs(np.diff(y))
    big = jumps > _STEP_FRACTION * y.max()
    return area - 0.5 * h * float(jumps[big].sum())


def shape_constant(wp):
    """C = f(peak) * FWHM / int f."""
    area = packet_integral(wp)
    if area <= 0:
        raise ParameterError("wave packet has zero area")
    return wp.peak_value * wp.fwhm / area


def generation_rate(wp, cal):
    """R_b = A * int G2 dtau (pairs/s)."""
    return cal.rate_proportionality * packet_integral(wp)


def spectrum(source, params=None, quad=None, delta=None):
    """|I(delta)|^2 on the packet's detuning grid, or on ``delta`` for ``params``."""
    if isinstance(source, WavePacket):
        if source.integrand is None:
            raise ParameterError("wave packet carries no spectral integrand")
        d, integ = source.detuning_grid, source.integrand
    else:
        params = source if isinstance(source, PhysicalParams) else params
        if delta is None:
            delta = np.linspace(-40.0, 40.0, 2**14, endpoint=False)
        d = np.asarray(delta, dtype=float)
        integ = biphoton_integrand(d, params, quad)
    return SpectrumSamples(np.asarray(d), np.abs(integ) ** 2)


def spectral_fwhm(spec):
    """(peak detuning, FWHM) of the magnitude spectrum, in Gamma units."""
    y = spec.magnitude
    d = spec.detuning_grid
    i = _peak_index(y)
    d0, peak = _refined_peak(d, y, i)
    half = 0.5 * peak
    left = _crossing(d, y, i, half, -1, False, peak)
    right = _crossing(d, y, i, half, +1, False, peak)
    return float(d0), right - left


@dataclass(frozen=True)
class LorentzianFit:
    center: float
    fwhm: float
    amplitude: float
    residual: float
    window: tuple


def lorentzian(delta, center, fwhm, amplitude):
    hw2 = (0.5 * fwhm) ** 2
    return amplitude * hw2 / ((np.asarray(delta) - center) ** 2 + hw2)


def lorentzian_fit(spec, half_window=None, max_nfev=2000):
    """Least-squares Lorentzian ``a (w/2)^2 / ((delta-delta0)^2 + (w/2)^2)``.

    Fits the samples within ``half_window`` of the spectral peak (default:
    three direct FWHMs). Levenberg-Marquardt, stopped when the relative
    parameter step falls below 1e-8. ``residual`` is the RMS misfit relative
    to the peak.
    """
    d = np.asarray(spec.detuning_grid, dtype=float)
    y = np.asarray(spec.magnitude, dtype=float)
    d0, width = spectral_fwhm(spec)
    peak = float(y.max())
    hw = 3.0 * width if half_window is None else float(half_window)
    sel = np.abs(d - d0) <= hw
    if sel.sum() < 4:
        raise FitError("fewer than four spectral samples inside the fit window")
    x, z = d[sel], y[sel] / peak

    def resid(p):
        return lorentzian(x, p[0], p[1], p[2]) - z

    sol = least_squares(resid, [d0, width, 1.0], method="lm", xtol=1e-8, ftol=1e-12,
                        gtol=1e-12, max_nfev=max_nfev, x_scale=[width, width, 1.0])
    if sol.status <= 0 or not np.all(np.isfinite(sol.x)):
        raise FitError(f"Lorentzian fit did not converge: {sol.message}", last_iterate=sol.x)
    c, w, a = sol.x
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    return LorentzianFit(float(c), float(abs(w)), float(a * peak), rms, (float(d0 - hw), float(d0 + hw)))


@dataclass(frozen=True)
class Brightness:
    esb: float
    esb_pairs_per_s_us: float
    sb: float


def brightness(rate_biphoton, fwhm_seconds, linewidth_mhz):
    """ESB = R_b * fwhm (dimensionless and in (pairs/s)*us); SB = R_b/linewidth (pairs/s/MHz)."""
    if rate_biphoton < 0 or fwhm_seconds < 0 or linewidth_mhz <= 0:
        raise ParameterError("rate and fwhm must be >= 0 and linewidth > 0")
    esb = rate_biphoton * fwhm_seconds
    return Brightness(esb, rate_biphoton * fwhm_seconds * 1e6, rate_biphoton / linewidth_mhz)


@dataclass(frozen=True)
class FactorizationCheck:
    max_deviation: float
    integral_deviation: float


def factorization_deviations(params, quad=None, grid_spec=None):
    """Compare the full G2 with the pump-factorized one.

    Returns the maximum pointwise relative deviation where G2 exceeds 1% of
    its peak, and the relative deviation of the areas (i.e. of R_b).
    """
    grid = grid_spec or GridSpec()
    full = correlation_function(params, quad, grid)
    fact = correlation_function(params, quad, replace_grid(grid, full), pump_factorized=True)
    if fact.tau_grid.shape != full.tau_grid.shape:
        raise GridRangeError("factorized and full packets landed on different grids")
    mask = full.values > 0.01 * full.values.max()
    dev = np.abs(fact.values[mask] - full.values[mask]) / full.values[mask]
    area_dev = abs(packet_integral(fact) - packet_integral(full)) / packet_integral(full)
    return FactorizationCheck(float(dev.max()), float(area_dev))


def replace_grid(grid, wp):
    """Grid reproducing ``wp``'s tau sampling, without further refinement."""
    rng = math.pi / wp.step
    count = grid.delta_count * max(1, int(round(rng / grid.delta_range)))
    return GridSpec(rng, count, grid.tau_range, grid.tolerance, grid.max_doublings, False)


def pump_factorization_check(params, quad=None, grid_spec=None):
    """Max relative deviation of the pump-factorized G2 from the full one."""
    return factorization_deviations(params, quad, grid_spec).max_deviation


def fwhm_seconds(wp):
    return units.tau_to_seconds(wp.fwhm)

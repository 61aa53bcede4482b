"""Heralding probabilities, pairing probability, SBR and quality factor.

Rates are in s^-1 and widths in seconds, so ``R_b * fwhm`` (the effective
spectral brightness) is dimensionless. The central identity is

    Q = R_b * fwhm * SBR = C * P,     P = h_s * h_p.
"""

from dataclasses import dataclass, asdict

from heraldsim.errors import CalibrationError, ParameterError, UndefinedSBRError

SBR_THRESHOLD = 6.5


@dataclass(frozen=True)
class SourceMetrics:
    rate_biphoton: float
    rate_signal: float
    rate_probe: float
    noise_rate_probe: float
    h_signal: float
    h_probe: float
    pairing: float
    shape_c: float
    sbr: float
    quality: float
    esb_dimensionless: float
    sb: float = float("nan")
    fwhm_s: float = float("nan")

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DetectedMetrics:
    """Detected coincidence rate and heralding efficiencies.

    Built from source quantities via :meth:`from_source`, which enforces
    R_d = R_b D_s D_p, e_s = h_s D_p and e_p = h_p D_s.
    """

    rate_detected: float
    e_signal: float
    e_probe: float

    @classmethod
    def from_source(cls, rate_biphoton, h_signal, h_probe, det_signal, det_probe):
        return cls(rate_biphoton * det_signal * det_probe, h_signal * det_probe, h_probe * det_signal)


def _check_unit_interval(name, value):
    if value > 1.0 + 1e-12:
        raise CalibrationError(f"{name} = {value:.6g} exceeds 1; calibration is inconsistent")


def signal_heralding(rate_biphoton, params, cal):
    """h_s = R_b / (B Omega_p^2 / (4 Delta_p^2))."""
    if rate_biphoton < 0:
        raise ParameterError("R_b must be >= 0")
    if rate_biphoton == 0:
        return 0.0
    if params.omega_pump == 0:
        raise ParameterError("h_s is undefined for zero pump Rabi frequency with R_b > 0")
    transition = cal.pump_rate_proportionality * params.omega_pump**2 / (4 * params.delta_pump**2)
    h = rate_biphoton / transition
    _check_unit_interval("h_s", h)
    return h


def probe_heralding(rate_biphoton, noise_rate_probe):
    """h_p = R_b / (R_b + R_pn); 0 when both rates vanish."""
    if rate_biphoton < 0 or noise_rate_probe < 0:
        raise ParameterError("rates must be >= 0")
    total = rate_biphoton + noise_rate_probe
    return 0.0 if total == 0 else rate_biphoton / total


def quality_factor(rate_biphoton, fwhm_s, sbr):
    """Q = R_b * fwhm * SBR."""
    return rate_biphoton * fwhm_s * sbr


def predict_sbr(rate_biphoton, fwhm_s, shape_c, pairing):
    """SBR implied by Q = C*P: C*P / (R_b * fwhm)."""
    esb = rate_biphoton * fwhm_s
    if esb == 0:
        raise UndefinedSBRError("SBR is undefined when R_b * fwhm = 0")
    return shape_c * pairing / esb


def detected_relation_check(detected, fwhm_s, sbr, shape_c):
    """Relative residual of R_d * fwhm * SBR = C * e_s * e_p."""
    rhs = shape_c * detected.e_signal * detected.e_probe
    if rhs == 0:
        raise UndefinedSBRError("C * e_s * e_p vanishes; residual undefined")
    return abs(detected.rate_detected * fwhm_s * sbr - rhs) / rhs


@dataclass(frozen=True)
class CriterionResult:
    passed: bool
    sbr: float
    cross_correlation: float


def single_photon_criterion(sbr, threshold=SBR_THRESHOLD):
    """Pass iff SBR > 6.5 (peak cross-correlation SBR + 1 > 7.5)."""
    return CriterionResult(bool(sbr > threshold), sbr, sbr + 1.0)


def source_metrics(rate_biphoton, fwhm_s, shape_c, h_signal, h_probe, linewidth_mhz=None):
    """Assemble SourceMetrics from rates and heralding probabilities via Q = C*P."""
    for name, h in (("h_s", h_signal), ("h_p", h_probe)):
        if h < 0:
            raise ParameterError(f"{name} must be >= 0")
        _check_unit_interval(name, h)
    pairing = h_signal * h_probe
    sbr = predict_sbr(rate_biphoton, fwhm_s, shape_c, pairing)
    rate_signal = rate_biphoton / h_signal if h_signal > 0 else float("inf")
    rate_probe = rate_biphoton / h_probe if h_probe > 0 else float("inf")
    sb = rate_biphoton / linewidth_mhz if linewidth_mhz else float("nan")
    return SourceMetrics(
        rate_biphoton=rate_biphoton,
        rate_signal=rate_signal,
        rate_probe=rate_probe,
        noise_rate_probe=rate_probe - rate_biphoton,
        h_signal=h_signal,
        h_probe=h_probe,
        pairing=pairing,
        shape_c=shape_c,
        sbr=sbr,
        quality=quality_factor(rate_biphoton, fwhm_s, sbr),
        esb_dimensionless=rate_biphoton * fwhm_s,
        sb=sb,
        fwhm_s=fwhm_s,
    )

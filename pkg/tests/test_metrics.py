import math

import numpy as np
import pytest

from heraldsim.errors import CalibrationError, ParameterError, UndefinedSBRError
from heraldsim.metrics import (
    DetectedMetrics,
    SBR_THRESHOLD,
    detected_relation_check,
    predict_sbr,
    probe_heralding,
    quality_factor,
    signal_heralding,
    single_photon_criterion,
    source_metrics,
)
from heraldsim.optical_response import PhysicalParams
from heraldsim.search import theory_summary
from heraldsim.wavepacket import CalibrationParams, GridSpec

GRID = GridSpec(delta_count=2**14)


def rate_for(params, cal=None):
    cal = cal or CalibrationParams()
    return cal.rate_proportionality * theory_summary(params, GRID)[0]


# ---- signal heralding ----------------------------------------------------

def test_signal_heralding_zero_rate():
    assert signal_heralding(0.0, PhysicalParams(), CalibrationParams()) == 0.0


def test_signal_heralding_at_reference_point():
    p = PhysicalParams()
    assert signal_heralding(rate_for(p), p, CalibrationParams()) == pytest.approx(0.83, abs=1e-4)


def test_signal_heralding_linear_in_a_over_b():
    p = PhysicalParams()
    base = CalibrationParams()
    r = rate_for(p, base)
    half = CalibrationParams.from_ratio(base.rate_proportionality, base.a_over_b / 2)
    assert signal_heralding(r, p, half) == pytest.approx(signal_heralding(r, p, base) / 2, rel=1e-14)


def test_signal_heralding_invariant_at_fixed_pump_ratio_when_factorized():
    p = PhysicalParams()
    cal = CalibrationParams()
    ratio = p.omega_pump / p.delta_pump
    values = []
    for dp in (200.0, 316.7, 600.0):
        q = p.with_(delta_pump=dp, omega_pump=ratio * dp)
        area = theory_summary(q.with_(delta_pump=p.delta_pump, omega_pump=p.omega_pump), GRID)[0]
        # factorized rate: G2 = (Omega_p/Delta_p)^2 G2'
        rate = cal.rate_proportionality * area * (q.omega_pump / q.delta_pump) ** 2 / ratio**2
        values.append(signal_heralding(rate, q, cal))
    assert np.ptp(values) < 1e-12


def test_signal_heralding_nearly_invariant_at_large_detuning():
    p = PhysicalParams()
    cal = CalibrationParams()
    hs = [signal_heralding(rate_for(p.with_(delta_pump=dp, omega_pump=om)), p.with_(delta_pump=dp, omega_pump=om),
                           cal)
          for dp in (400.0, 550.0) for om in (4.0, 8.0)]
    assert np.ptp(hs) / np.mean(hs) < 0.02


def test_signal_heralding_above_one_is_calibration_error():
    p = PhysicalParams()
    cal = CalibrationParams.from_ratio(1.0, 1.0)
    with pytest.raises(CalibrationError):
        signal_heralding(rate_for(p), p, cal)


# ---- probe heralding -----------------------------------------------------

def test_probe_heralding_values():
    assert probe_heralding(5.0, 0.0) == 1.0
    assert probe_heralding(5.0, 5.0) == 0.5
    assert probe_heralding(0.0, 0.0) == 0.0
    assert probe_heralding(0.0, 10.0) == 0.0
    with pytest.raises(ParameterError):
        probe_heralding(-1.0, 0.0)


def test_reference_pairing_from_quoted_heralding():
    rb = 7.5e5
    hp = probe_heralding(rb, rb / 49)
    assert hp == pytest.approx(0.98, rel=1e-12)
    assert 0.83 * hp == pytest.approx(0.81, abs=0.02)


# ---- quality factor and SBR ----------------------------------------------

def test_predict_sbr_square_ideal():
    assert predict_sbr(1e6, 1e-7, 1.0, 1.0) == pytest.approx(10.0, rel=1e-14)


def test_quality_factor_reference_numbers():
    assert quality_factor(7.5e5, 131e-9, 6.9) == pytest.approx(0.678, abs=1e-3)
    assert quality_factor(7.5e5, 131e-9, 6.9) == pytest.approx(0.68, abs=0.02)


def test_zero_pairing_gives_zero_quality():
    sbr = predict_sbr(3e5, 1e-7, 0.8, 0.0)
    assert quality_factor(3e5, 1e-7, sbr) == 0.0


def test_undefined_sbr():
    with pytest.raises(UndefinedSBRError):
        predict_sbr(0.0, 1e-7, 0.7, 0.5)
    with pytest.raises(ZeroDivisionError):
        predict_sbr(1e5, 0.0, 0.7, 0.5)


def test_q_over_c_equals_p_for_analytic_ensemble():
    rng = np.random.default_rng(11)
    ps, qc = [], []
    for _ in range(200):
        c = rng.uniform(0.5, 1.0)
        hs, hp = rng.uniform(0.0, 1.0, 2)
        rb, w = rng.uniform(1e4, 1e6), rng.uniform(1e-8, 1e-6)
        m = source_metrics(rb, w, c, hs, hp)
        assert m.quality / c == pytest.approx(hs * hp, rel=1e-12, abs=1e-15)
        assert m.pairing == hs * hp
        assert m.quality == pytest.approx(m.esb_dimensionless * m.sbr, rel=1e-15)
        assert m.quality <= c + 1e-12
        ps.append(m.pairing)
        qc.append(m.quality / c)
    slope, intercept = np.polyfit(ps, qc, 1)
    assert slope == pytest.approx(1.0, abs=1e-10)
    assert abs(intercept) < 1e-10


def test_source_metrics_fields():
    m = source_metrics(7.5e5, 131e-9, 0.8, 0.83, 0.98, linewidth_mhz=1.07)
    assert m.rate_signal == pytest.approx(7.5e5 / 0.83)
    assert m.noise_rate_probe == pytest.approx(7.5e5 / 0.98 - 7.5e5)
    assert m.sb == pytest.approx(7.5e5 / 1.07)
    assert set(m.as_dict()) >= {"h_signal", "h_probe", "pairing", "quality", "sbr"}


def test_source_metrics_rejects_probability_above_one():
    with pytest.raises(CalibrationError):
        source_metrics(1e5, 1e-7, 0.7, 1.2, 0.9)


# ---- detected form -------------------------------------------------------

def test_detected_relation_efficiency_invariant():
    rb, w, c, hs, hp = 7.5e5, 131e-9, 0.8, 0.83, 0.98
    sbr = predict_sbr(rb, w, c, hs * hp) * 1.03
    r1 = detected_relation_check(DetectedMetrics.from_source(rb, hs, hp, 1.0, 1.0), w, sbr, c)
    r2 = detected_relation_check(DetectedMetrics.from_source(rb, hs, hp, 0.5, 0.3), w, sbr, c)
    assert r1 == pytest.approx(0.03, rel=1e-12)
    assert r2 == pytest.approx(r1, rel=1e-12)


@pytest.mark.parametrize("ds,dp", [(1.0, 1.0), (0.13, 0.094), (0.5, 0.7)])
def test_detected_relation_ideal_square(ds, dp):
    rb, w = 1e6, 1e-7
    sbr = predict_sbr(rb, w, 1.0, 1.0)
    d = DetectedMetrics.from_source(rb, 1.0, 1.0, ds, dp)
    assert d.rate_detected == pytest.approx(rb * ds * dp)
    assert d.e_signal == dp and d.e_probe == ds
    assert detected_relation_check(d, w, sbr, 1.0) < 1e-14


# ---- criterion -----------------------------------------------------------

def test_single_photon_criterion():
    r = single_photon_criterion(6.9)
    assert r.passed and r.cross_correlation == pytest.approx(7.9)
    assert not single_photon_criterion(6.5).passed
    assert single_photon_criterion(6.51).passed
    assert SBR_THRESHOLD == 6.5
    assert math.isclose(single_photon_criterion(6.5).cross_correlation, 7.5)

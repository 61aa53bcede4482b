"""Command-line front end.

    heraldsim wavepacket --config cfg.json --out DIR [--units si|gamma]
    heraldsim metrics    --config cfg.json --out DIR
    heraldsim simulate   --config cfg.json --out DIR [--seed N]
    heraldsim optimize   --config cfg.json --out DIR
    heraldsim sweep      --config cfg.json --out DIR

Exit codes: 0 success, 1 domain/numerical error, 2 configuration error.
Every run writes ``manifest.json`` echoing the resolved configuration, which
can itself be passed back as ``--config``.
"""

import argparse
import copy
import math
import sys
from pathlib import Path

import numpy as np

from heraldsim import coincidence, io, metrics, search, sweep, units, wavepacket
from heraldsim.errors import ConfigError, HeraldsimError
from heraldsim.optical_response import PhysicalParams
from heraldsim.profiles import PROFILE_KINDS, Profile

_PHYSICAL_FIELDS = {
    "alpha": "dimensionless",
    "impurity_fraction": "dimensionless",
    "gamma_doppler": "frequency",
    "gamma_etalon": "frequency",
    "delta_pump": "frequency",
    "delta_coupling": "frequency",
    "gamma_decoherence": "frequency",
}
_MEDIUM_FIELDS = ("alpha", "impurity_fraction", "gamma_doppler", "gamma_etalon")


class _Resolver:
    """Reads config values and records the resolved form for the manifest."""

    def __init__(self, config):
        self.raw = config
        self.resolved = copy.deepcopy(config)

    def section(self, name, required=True):
        sec = self.raw.get(name)
        if sec is None:
            if required:
                raise ConfigError(f"missing required section '{name}'")
            self.resolved[name] = {}
            return {}
        if not isinstance(sec, dict):
            raise ConfigError(f"section '{name}' must be an object")
        return sec

    def get(self, sec_name, key, kind, default=None, required=False):
        sec = self.raw.get(sec_name) or {}
        if key in sec:
            return io.parse_quantity(sec[key], kind, f"{sec_name}.{key}")
        if required or default is None:
            raise ConfigError(f"missing required field '{sec_name}.{key}'")
        self.resolved.setdefault(sec_name, {})[key] = default
        return io.parse_quantity(default, kind, f"{sec_name}.{key}")

    def optional(self, sec_name, key, default):
        sec = self.raw.get(sec_name) or {}
        if key in sec:
            return sec[key]
        self.resolved.setdefault(sec_name, {})[key] = default
        return default


def _physical(res, required=tuple(_PHYSICAL_FIELDS) + ("pump", "coupling")):
    sec = res.section("physical")
    values = {}
    for key, kind in _PHYSICAL_FIELDS.items():
        if key in sec:
            values[key] = io.parse_quantity(sec[key], kind, f"physical.{key}")
        elif key in required:
            raise ConfigError(f"missing required field 'physical.{key}'")
    for field, power_key, rabi in (
        ("omega_pump", "pump_power", search.PUMP_RABI_PER_SQRT_MW),
        ("omega_coupling", "coupling_power", search.COUPLING_RABI_PER_SQRT_MW),
    ):
        if field in sec:
            values[field] = io.parse_quantity(sec[field], "frequency", f"physical.{field}")
        elif power_key in sec:
            values[field] = rabi * math.sqrt(io.parse_quantity(sec[power_key], "power", f"physical.{power_key}"))
        elif field.split("_")[1] in required:
            raise ConfigError(f"missing required field 'physical.{field}' (or 'physical.{power_key}')")
    return PhysicalParams(**values)


def _calibration(res):
    default = wavepacket.CalibrationParams()
    a = res.get("calibration", "rate_proportionality", "dimensionless", default.rate_proportionality)
    a_over_b = res.get("calibration", "a_over_b", "rate", f"{default.a_over_b!r} /s")
    ds = res.get("calibration", "detection_eff_signal", "dimensionless", 1.0)
    dp = res.get("calibration", "detection_eff_probe", "dimensionless", 1.0)
    return wavepacket.CalibrationParams.from_ratio(a, a_over_b, ds, dp)


def _grid(res):
    default = wavepacket.GridSpec()
    rng = res.get("grid", "delta_range", "frequency", f"{default.delta_range!r} Gamma")
    count = res.get("grid", "delta_count", "dimensionless", default.delta_count)
    span = res.optional("grid", "tau_range", [f"{v!r} /Gamma" for v in default.tau_range])
    if not isinstance(span, list) or len(span) != 2:
        raise ConfigError("grid.tau_range must be a two-element list of times")
    tau = tuple(units.seconds_to_tau(io.parse_quantity(v, "time", "grid.tau_range")) for v in span)
    return wavepacket.GridSpec(delta_range=rng, delta_count=int(count), tau_range=tau)


def _time_out(value_tau, mode):
    return units.tau_to_seconds(value_tau) * 1e9 if mode == "si" else value_tau


def _freq_out(value_gamma, mode):
    return units.gamma_to_mhz(value_gamma) if mode == "si" else value_gamma


def _unit_labels(mode):
    return ("ns", "MHz") if mode == "si" else ("1/Gamma", "Gamma")


def cmd_wavepacket(res, args, out):
    params = _physical(res)
    cal = _calibration(res)
    grid = _grid(res)
    wp = wavepacket.correlation_function(params, grid_spec=grid)
    spec = wavepacket.spectrum(wp)
    d0, width = wavepacket.spectral_fwhm(spec)
    fit = wavepacket.lorentzian_fit(spec)
    rate = wavepacket.generation_rate(wp, cal)
    fwhm_s = units.tau_to_seconds(wp.fwhm)
    bright = wavepacket.brightness(rate, fwhm_s, units.gamma_to_mhz(fit.fwhm))
    tl, fl = _unit_labels(args.units)
    files = []
    files.append(io.write_columns(
        out / "wavepacket.csv",
        [f"units: tau in {tl}; g2 in internal units (Gamma = 1)"],
        ["tau", "g2"], [_time_out(wp.tau_grid, args.units), wp.values]))
    keep = np.abs(spec.detuning_grid - d0) <= 10.0
    files.append(io.write_columns(
        out / "spectrum.csv",
        [f"units: detuning in {fl} (ordinary frequency for MHz); magnitude = |I(delta)|^2, internal units"],
        ["detuning", "magnitude"],
        [_freq_out(spec.detuning_grid[keep], args.units), spec.magnitude[keep]]))
    files.append(io.write_json(out / "lorentzian_fit.json", {
        "frequency_unit": fl,
        "center": _freq_out(fit.center, args.units),
        "fwhm": _freq_out(fit.fwhm, args.units),
        "amplitude": fit.amplitude,
        "relative_rms_residual": fit.residual,
        "window": [_freq_out(v, args.units) for v in fit.window],
    }))
    files.append(io.write_json(out / "metrics.json", {
        "time_unit": tl,
        "frequency_unit": fl,
        "peak_time": _time_out(wp.peak_time, args.units),
        "fwhm": _time_out(wp.fwhm, args.units),
        "spectral_peak": _freq_out(d0, args.units),
        "spectral_fwhm": _freq_out(width, args.units),
        "lorentzian_fwhm": _freq_out(fit.fwhm, args.units),
        "shape_c": wavepacket.shape_constant(wp),
        "g2_integral": wavepacket.packet_integral(wp),
        "rate_biphoton_per_s": rate,
        "esb_dimensionless": bright.esb,
        "esb_pairs_per_s_us": bright.esb_pairs_per_s_us,
        "sb_pairs_per_s_per_mhz": bright.sb,
    }))
    return files


def cmd_metrics(res, args, out):
    params = _physical(res)
    cal = _calibration(res)
    grid = _grid(res)
    noise = res.get("metrics", "noise_rate_probe", "rate", required=True)
    wp = wavepacket.correlation_function(params, grid_spec=grid)
    rate = wavepacket.generation_rate(wp, cal)
    fit = wavepacket.lorentzian_fit(wavepacket.spectrum(wp))
    fwhm_s = units.tau_to_seconds(wp.fwhm)
    h_s = metrics.signal_heralding(rate, params, cal)
    h_p = metrics.probe_heralding(rate, noise)
    m = metrics.source_metrics(rate, fwhm_s, wavepacket.shape_constant(wp), h_s, h_p,
                               units.gamma_to_mhz(fit.fwhm))
    crit = metrics.single_photon_criterion(m.sbr)
    detected = metrics.DetectedMetrics.from_source(rate, h_s, h_p, cal.detection_eff_signal,
                                                   cal.detection_eff_probe)
    payload = m.as_dict()
    payload.update(
        esb_pairs_per_s_us=m.esb_dimensionless * 1e6,
        cross_correlation=crit.cross_correlation,
        single_photon_criterion=crit.passed,
        rate_detected=detected.rate_detected,
        e_signal=detected.e_signal,
        e_probe=detected.e_probe,
    )
    return [io.write_json(out / "metrics.json", payload)]


def _sim_config(res, args):
    sec = res.section("simulate")
    duration = res.get("simulate", "duration", "time", required=True)
    rates = {k: res.get("simulate", k, "rate", required=True)
             for k in ("rate_pairs", "rate_noise_signal", "rate_noise_probe")}
    prof = io.require(sec, "profile", "simulate")
    kind = io.require(prof, "kind", "simulate.profile")
    if kind in PROFILE_KINDS:
        fwhm = io.parse_quantity(io.require(prof, "fwhm", "simulate.profile"), "time", "simulate.profile.fwhm")
        profile = Profile.from_fwhm(kind, fwhm)
    elif kind == "wavepacket":
        wp = wavepacket.correlation_function(_physical(res), grid_spec=_grid(res))
        profile = coincidence.profile_from_wavepacket(wp, units.GAMMA_INV_S)
    else:
        raise ConfigError(f"simulate.profile.kind {kind!r} is not one of {PROFILE_KINDS + ('wavepacket',)}")
    seed = args.seed if args.seed is not None else int(res.optional("simulate", "seed", 0))
    res.resolved["simulate"]["seed"] = seed
    return coincidence.SimConfig(
        duration=duration,
        profile=profile,
        detection_eff_signal=res.get("simulate", "detection_eff_signal", "dimensionless", 1.0),
        detection_eff_probe=res.get("simulate", "detection_eff_probe", "dimensionless", 1.0),
        dark_rate=res.get("simulate", "dark_rate", "rate", "0 /s"),
        seed=seed,
        slabs=int(res.get("simulate", "slabs", "dimensionless", coincidence.DEFAULT_SLABS)),
        **rates,
    )


def _sim_binning(res, cfg):
    bw, win = coincidence.default_binning(cfg.fwhm)
    sec = res.raw.get("simulate", {})
    if "bin_width" in sec:
        bw = io.parse_quantity(sec["bin_width"], "time", "simulate.bin_width")
    if "window" in sec:
        win = tuple(io.parse_quantity(v, "time", "simulate.window") for v in sec["window"])
    return bw, win


def _empirical_payload(est, cfg):
    payload = est.as_dict()
    payload.update(
        configured_pairing=cfg.pairing,
        configured_h_signal=cfg.h_signal,
        configured_h_probe=cfg.h_probe,
        configured_shape_c=cfg.shape_c,
        q_over_c=est.quality / cfg.shape_c,
        seed=int(cfg.seed),
    )
    return payload


def cmd_simulate(res, args, out):
    cfg = _sim_config(res, args)
    bw, win = _sim_binning(res, cfg)
    streams = coincidence.simulate(cfg)
    hist = coincidence.histogram(streams, bw, win)
    est = coincidence.estimate_metrics(hist, cfg, streams)
    files = [io.write_histogram_csv(out / "histogram.csv", hist),
             io.write_json(out / "metrics.json", _empirical_payload(est, cfg))]
    if res.optional("simulate", "export_events", False):
        files.append(io.write_events(out / "events.npz", streams))
    return files


_AXIS_KIND = {"pump_power": "power", "delta_pump": "frequency", "coupling_power": "power",
              "delta_coupling": "frequency"}
_SEARCH_KEYS = ("pump_power", "delta_pump", "coupling_power", "delta_coupling")
_DEFAULT_BOUNDS = {"pump_power": ["1 mW", "11 mW"], "delta_pump": ["1.4 GHz", "3.4 GHz"],
                   "coupling_power": ["3 mW", "36 mW"], "delta_coupling": ["0 GHz", "3.0 GHz"]}
_DEFAULT_STEPS = {"pump_power": "0.5 mW", "delta_pump": "0.5 GHz", "coupling_power": "1 mW",
                  "delta_coupling": "0.5 GHz"}


def _search_value(key, text, name):
    v = io.parse_quantity(text, _AXIS_KIND[key], name)
    return units.gamma_to_ghz(v) if _AXIS_KIND[key] == "frequency" else v


def cmd_optimize(res, args, out):
    base = _physical(res, required=_MEDIUM_FIELDS)
    cal = _calibration(res)
    res.section("optimize", required=False)
    bounds_cfg = res.optional("optimize", "bounds", _DEFAULT_BOUNDS)
    steps_cfg = res.optional("optimize", "steps", _DEFAULT_STEPS)
    bounds, steps = [], []
    for key in _SEARCH_KEYS:
        pair = io.require(bounds_cfg, key, "optimize.bounds")
        bounds.append(tuple(_search_value(key, v, f"optimize.bounds.{key}") for v in pair))
        steps.append(_search_value(key, io.require(steps_cfg, key, "optimize.steps"), f"optimize.steps.{key}"))
    gamma = res.get("optimize", "gamma", "frequency", "0.012 Gamma")
    table = res.optional("optimize", "gamma_table", [])
    if table:
        parsed = {}
        for i, entry in enumerate(table):
            pt = io.require(entry, "point", f"optimize.gamma_table[{i}]")
            parsed[tuple(_search_value(k, v, f"optimize.gamma_table[{i}].point") for k, v in zip(_SEARCH_KEYS, pt))] = \
                io.parse_quantity(io.require(entry, "gamma", f"optimize.gamma_table[{i}]"), "frequency",
                                  f"optimize.gamma_table[{i}].gamma")
        gamma_model = search.tabulated_gamma(parsed, gamma)
    else:
        gamma_model = search.constant_gamma(gamma)
    threshold = res.get("optimize", "sbr_threshold", "dimensionless", metrics.SBR_THRESHOLD)
    spec = search.SearchSpec(bounds=tuple(bounds), steps=tuple(steps), gamma_model=gamma_model,
                             sbr_threshold=threshold, base_params=base)
    result = search.search(spec, cal, polish=bool(res.optional("optimize", "refine", True)))
    si = args.units == "si"
    det_unit = "GHz" if si else "Gamma"

    def det(v):
        return v if si else units.ghz_to_gamma(v)

    rows = [r for r in result.log if r.get("point") is not None]
    cols = [
        [r["point"][0] for r in rows],
        [det(r["point"][1]) for r in rows],
        [r["point"][2] for r in rows],
        [det(r["point"][3]) for r in rows],
        [float(r.get("pairing", float("nan"))) for r in rows],
        [float(r.get("sbr", float("nan"))) for r in rows],
        [float(r.get("quality", float("nan"))) for r in rows],
        [int(bool(r.get("feasible", False))) for r in rows],
        [int("error" in r) for r in rows],
    ]
    files = [io.write_columns(
        out / "search_log.csv",
        [f"units: pump_power, coupling_power in mW; delta_pump, delta_coupling in {det_unit}",
         "calibration_error = 1 marks points where h_s > 1 (model outside its calibrated range)"],
        ["pump_power", "delta_pump", "coupling_power", "delta_coupling", "pairing", "sbr", "quality",
         "feasible", "calibration_error"], cols)]
    best = {"status": result.status, "optimum_excluded_by_constraint": result.optimum_excluded,
            "detuning_unit": det_unit, "evaluations": len(result.log)}
    if result.feasible:
        p = result.best_point
        best.update(point={"pump_power_mw": p[0], "delta_pump": det(p[1]), "coupling_power_mw": p[2],
                           "delta_coupling": det(p[3])},
                    pairing=result.best_pairing, sbr=result.best.sbr, quality=result.best.quality,
                    metrics=result.best.metrics)
    if result.unconstrained_best is not None:
        u = result.unconstrained_best
        best["unconstrained_best"] = {"point": list(u.point), "pairing": u.pairing, "sbr": u.sbr}
    files.append(io.write_json(out / "best.json", best))
    return files


def cmd_sweep(res, args, out):
    base = _physical(res, required=_MEDIUM_FIELDS)
    cal = _calibration(res)
    sec = res.section("sweep")
    if "preset" in sec:
        fixed, axis, values = sweep.preset(sec["preset"])
    else:
        axis = io.require(sec, "axis", "sweep")
        if axis not in sweep.SWEEP_AXES:
            raise ConfigError(f"sweep.axis {axis!r} is not one of {sweep.SWEEP_AXES}")
        values = [io.parse_quantity(v, _AXIS_KIND[axis], "sweep.values") for v in io.require(sec, "values", "sweep")]
        fixed = {}
        for key, text in (sec.get("fixed") or {}).items():
            kind = _AXIS_KIND.get(key, "frequency")
            fixed[key] = io.parse_quantity(text, kind, f"sweep.fixed.{key}")
    g = sec.get("gamma", "0.012 Gamma")
    gammas = ([io.parse_quantity(v, "frequency", "sweep.gamma") for v in g] if isinstance(g, list)
              else io.parse_quantity(g, "frequency", "sweep.gamma"))
    if "gamma" not in sec:
        res.resolved["sweep"]["gamma"] = g
    medium = {k: getattr(base, k) for k in _MEDIUM_FIELDS}
    medium.update(fixed)
    rows = sweep.run_sweep(medium, axis, values, gammas, cal, base=base)
    kind = _AXIS_KIND[axis]
    if kind == "frequency":
        conv, unit = (units.gamma_to_ghz, "GHz") if args.units == "si" else ((lambda v: v), "Gamma")
    else:
        conv, unit = (lambda v: v), "mW"
    cols = [[conv(r.value) for r in rows], [r.pump_ratio for r in rows], [r.h_signal for r in rows],
            [r.h_probe for r in rows], [r.rate_biphoton for r in rows], [r.noise_rate_probe for r in rows],
            [r.gamma for r in rows]]
    return [io.write_columns(
        out / "sweep.csv",
        [f"axis: {axis} in {unit}; pump_ratio = Omega_p^2/Delta_p^2 (dimensionless); rates in 1/s; gamma in Gamma"],
        [axis, "pump_ratio", "h_signal", "h_probe", "rate_biphoton", "noise_rate_probe", "gamma"], cols)]


COMMANDS = {
    "wavepacket": cmd_wavepacket,
    "metrics": cmd_metrics,
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="heraldsim", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="JSON config or a previous manifest.json")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="RNG seed (simulate)")
        p.add_argument("--units", choices=("si", "gamma"), default="si",
                       help="units of exported times/frequencies (default si)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = io.load_config(args.config)
        res = _Resolver(config)
        args.out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[args.command](res, args, args.out)
        seed = res.resolved.get("simulate", {}).get("seed") if args.command == "simulate" else args.seed
        io.write_manifest(args.out, args.command, res.resolved, seed, args.units, files)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (HeraldsimError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

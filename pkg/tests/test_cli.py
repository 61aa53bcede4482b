import json
import os
from pathlib import Path

import numpy as np
import pytest

from heraldsim import io, units
from heraldsim.cli import main

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = Path(__file__).parent / "golden"
REGEN = os.environ.get("HERALDSIM_REGEN_GOLDEN") == "1"

MEDIUM = {"alpha": 500, "impurity_fraction": 0.375, "gamma_doppler": "54 Gamma", "gamma_etalon": "8.9 Gamma"}
PHYSICAL = {**MEDIUM, "omega_coupling": "12 Gamma", "pump_power": "5.5 mW", "delta_pump": "1.90 GHz",
            "delta_coupling": "1.00 GHz", "gamma_decoherence": "0.012 Gamma"}
SMALL_GRID = {"delta_range": "40 Gamma", "delta_count": 16384}
SIM = {"duration": "0.2 s", "rate_pairs": "5e5 /s", "rate_noise_signal": "1e5 /s",
       "rate_noise_probe": "2e4 /s", "profile": {"kind": "double-exp", "fwhm": "100 ns"}, "slabs": 10}
SMALL_SEARCH = {
    "bounds": {"pump_power": ["4 mW", "6 mW"], "delta_pump": ["1.4 GHz", "2.4 GHz"],
               "coupling_power": ["15 mW", "19 mW"], "delta_coupling": ["1.0 GHz", "1.5 GHz"]},
    "steps": {"pump_power": "1 mW", "delta_pump": "0.5 GHz", "coupling_power": "2 mW",
              "delta_coupling": "0.5 GHz"},
}

CASES = {
    "wavepacket_reference_si": ("wavepacket", {"physical": PHYSICAL}, ["--units", "si"]),
    "wavepacket_reference_gamma": ("wavepacket", {"physical": PHYSICAL}, ["--units", "gamma"]),
    "wavepacket_low_impurity": ("wavepacket", {"physical": {**PHYSICAL, "impurity_fraction": 0.2},
                                               "grid": SMALL_GRID}, []),
    "metrics_reference": ("metrics", {"physical": PHYSICAL, "metrics": {"noise_rate_probe": "15306 /s"}}, []),
    "metrics_noisy": ("metrics", {"physical": PHYSICAL, "metrics": {"noise_rate_probe": "1e5 /s"},
                                  "grid": SMALL_GRID}, []),
    "metrics_detected": ("metrics", {"physical": PHYSICAL, "metrics": {"noise_rate_probe": "15306 /s"},
                                     "calibration": {"detection_eff_signal": 0.13, "detection_eff_probe": 0.094},
                                     "grid": SMALL_GRID}, []),
    "simulate_double_exp": ("simulate", {"simulate": SIM}, ["--seed", "11"]),
    "simulate_square_efficiency": ("simulate", {"simulate": {**SIM, "profile": {"kind": "square", "fwhm": "80 ns"},
                                                             "detection_eff_signal": 0.5,
                                                             "detection_eff_probe": 0.4}}, ["--seed", "12"]),
    "simulate_gaussian_dark": ("simulate", {"simulate": {**SIM, "profile": {"kind": "gaussian", "fwhm": "150 ns"},
                                                         "dark_rate": "200 /s", "seed": 13}}, []),
    "optimize_small": ("optimize", {"physical": MEDIUM, "optimize": {**SMALL_SEARCH, "refine": False}}, []),
    "optimize_small_refined": ("optimize", {"physical": MEDIUM, "optimize": SMALL_SEARCH}, []),
    "optimize_strict": ("optimize", {"physical": MEDIUM, "optimize": {**SMALL_SEARCH, "refine": False,
                                                                     "sbr_threshold": 8.0}}, ["--units", "gamma"]),
    "sweep_pump_power": ("sweep", {"physical": MEDIUM, "sweep": {"preset": "pump_power"}}, []),
    "sweep_delta_coupling": ("sweep", {"physical": MEDIUM, "sweep": {"preset": "delta_coupling"}}, ["--units", "gamma"]),
    "sweep_explicit": ("sweep", {"physical": MEDIUM, "sweep": {
        "axis": "delta_pump", "values": ["1.4 GHz", "2.9 GHz"],
        "fixed": {"omega_coupling": "12 Gamma", "pump_power": "2 mW", "delta_coupling": "1.0 GHz"},
        "gamma": ["0.010 Gamma", "0.015 Gamma"]}}, []),
}


def run_cli(tmp_path, command, config, extra=(), name="cfg.json"):
    cfg = tmp_path / name
    cfg.write_text(json.dumps(config))
    out = tmp_path / "out"
    code = main([command, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def summarize(out):
    """Compact, comparable digest of every output file."""
    summary = {}
    for path in sorted(out.iterdir()):
        if path.suffix == ".json" and path.name != "manifest.json":
            summary[path.name] = json.loads(path.read_text())
        elif path.suffix == ".csv":
            _, names, data = io.read_columns(path)
            summary[path.name] = {
                "names": names,
                "rows": int(data.shape[0]),
                "sums": data.sum(axis=0).tolist(),
                "first": data[0].tolist(),
                "last": data[-1].tolist(),
                "argmax_last_column": int(np.argmax(data[:, -1])),
            }
    return summary


def assert_close(actual, expected, path="$"):
    if isinstance(expected, dict):
        assert set(actual) == set(expected), path
        for k in expected:
            assert_close(actual[k], expected[k], f"{path}.{k}")
    elif isinstance(expected, list):
        assert len(actual) == len(expected), path
        for i, (a, e) in enumerate(zip(actual, expected)):
            assert_close(a, e, f"{path}[{i}]")
    elif isinstance(expected, float) and not isinstance(actual, str):
        assert actual == pytest.approx(expected, rel=1e-9, abs=1e-300, nan_ok=True), path
    else:
        assert actual == expected, path


@pytest.mark.parametrize("case", sorted(CASES))
def test_golden(tmp_path, case):
    command, config, extra = CASES[case]
    code, out = run_cli(tmp_path, command, config, extra)
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == command and manifest["tool"] == "heraldsim"
    summary = summarize(out)
    golden = GOLDEN / f"{case}.json"
    if REGEN or not golden.exists():
        if not REGEN:
            pytest.fail(f"golden file {golden.name} missing; run with HERALDSIM_REGEN_GOLDEN=1")
        golden.write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    assert_close(json.loads(json.dumps(summary)), json.loads(golden.read_text()))


def test_manifest_reproduces_run(tmp_path):
    code, out = run_cli(tmp_path, "simulate", {"simulate": SIM}, ["--seed", "5"])
    assert code == 0
    first = summarize(out)
    replay = tmp_path / "replay"
    assert main(["simulate", "--config", str(out / "manifest.json"), "--out", str(replay)]) == 0
    assert summarize(replay) == first
    resolved = json.loads((out / "manifest.json").read_text())["config"]
    assert resolved["simulate"]["seed"] == 5 and resolved["simulate"]["dark_rate"] == "0 /s"


def test_units_modes_differ_by_conversion(tmp_path):
    outs = {}
    for mode in ("si", "gamma"):
        (tmp_path / mode).mkdir()
        code, outs[mode] = run_cli(tmp_path / mode, "wavepacket", {"physical": PHYSICAL, "grid": SMALL_GRID},
                                   ["--units", mode])
        assert code == 0
    si, ga = outs["si"], outs["gamma"]
    m_si = json.loads((si / "metrics.json").read_text())
    m_ga = json.loads((ga / "metrics.json").read_text())
    assert m_si["time_unit"] == "ns" and m_ga["time_unit"] == "1/Gamma"
    assert m_si["fwhm"] == pytest.approx(m_ga["fwhm"] * units.GAMMA_INV_S * 1e9, rel=1e-14)
    assert m_si["lorentzian_fwhm"] == pytest.approx(m_ga["lorentzian_fwhm"] * 6.0, rel=1e-14)
    assert m_si["shape_c"] == m_ga["shape_c"] and m_si["rate_biphoton_per_s"] == m_ga["rate_biphoton_per_s"]
    _, _, t_si = io.read_columns(si / "wavepacket.csv")
    _, _, t_ga = io.read_columns(ga / "wavepacket.csv")
    assert np.allclose(t_si[:, 0], t_ga[:, 0] * units.GAMMA_INV_S * 1e9, rtol=1e-14, atol=0)
    assert np.array_equal(t_si[:, 1], t_ga[:, 1])
    _, _, s_si = io.read_columns(si / "spectrum.csv")
    _, _, s_ga = io.read_columns(ga / "spectrum.csv")
    assert np.allclose(s_si[:, 0], s_ga[:, 0] * 6.0, rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("command,config,field", [
    ("wavepacket", {"physical": {k: v for k, v in PHYSICAL.items() if k != "delta_pump"}}, "physical.delta_pump"),
    ("wavepacket", {}, "physical"),
    ("metrics", {"physical": PHYSICAL}, "metrics.noise_rate_probe"),
    ("simulate", {"simulate": {k: v for k, v in SIM.items() if k != "rate_pairs"}}, "simulate.rate_pairs"),
    ("simulate", {"simulate": {**SIM, "profile": {"kind": "double-exp"}}}, "simulate.profile.fwhm"),
    ("sweep", {"physical": MEDIUM, "sweep": {"values": ["1 GHz"]}}, "sweep.axis"),
    ("optimize", {"physical": {"alpha": 500}}, "physical.impurity_fraction"),
])
def test_missing_field_exit_two(tmp_path, capsys, command, config, field):
    code, _ = run_cli(tmp_path, command, config)
    assert code == 2
    assert field in capsys.readouterr().err


def test_bare_number_rejected(tmp_path, capsys):
    code, _ = run_cli(tmp_path, "wavepacket", {"physical": {**PHYSICAL, "delta_pump": 316.7}})
    assert code == 2
    assert "physical.delta_pump" in capsys.readouterr().err


def test_domain_error_exit_one(tmp_path, capsys):
    config = {"physical": PHYSICAL, "metrics": {"noise_rate_probe": "1e4 /s"},
              "calibration": {"a_over_b": "1 /s"}, "grid": SMALL_GRID}
    code, _ = run_cli(tmp_path, "metrics", config)
    assert code == 1
    assert "h_s" in capsys.readouterr().err


def test_export_events(tmp_path):
    code, out = run_cli(tmp_path, "simulate", {"simulate": {**SIM, "export_events": True}})
    assert code == 0 and (out / "events.npz").exists()


@pytest.mark.parametrize("name", sorted(p.name for p in (ROOT / "configs").glob("*.json") if p.name != "optimize.json"))
def test_shipped_configs_run(tmp_path, name):
    command = "metrics" if name == "reference.json" else name.split("_")[0]
    out = tmp_path / "out"
    assert main([command, "--config", str(ROOT / "configs" / name), "--out", str(out)]) == 0

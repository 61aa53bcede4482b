"""Configuration parsing and file export.

Physical config values are strings with explicit units, e.g. ``"12 Gamma"``,
``"1.90 GHz"``, ``"5.5 mW"``, ``"131 ns"``, ``"7.5e5 /s"``. Bare numbers are
accepted only for dimensionless fields. CSV files carry their column units in
``#`` header lines and use locale-independent ``repr`` formatting.
"""

import csv
import json
import math
import re
from pathlib import Path

import numpy as np

from heraldsim import __version__, units
from heraldsim.errors import ConfigError

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QUANTITY = re.compile(rf"^\s*({_NUMBER})\s*(.*?)\s*$")

# kind -> unit -> factor into the internal unit of that kind
_UNITS = {
    # angular frequency in Gamma; ordinary frequencies are divided by Gamma/2pi
    "frequency": {
        "gamma": 1.0,
        "hz": 1.0 / units.GAMMA_OVER_2PI_HZ,
        "khz": 1e3 / units.GAMMA_OVER_2PI_HZ,
        "mhz": 1e6 / units.GAMMA_OVER_2PI_HZ,
        "ghz": 1e9 / units.GAMMA_OVER_2PI_HZ,
    },
    "power": {"mw": 1.0, "uw": 1e-3, "w": 1e3},
    # seconds
    "time": {
        "s": 1.0,
        "ms": 1e-3,
        "us": 1e-6,
        "ns": 1e-9,
        "ps": 1e-12,
        "/gamma": units.GAMMA_INV_S,
        "1/gamma": units.GAMMA_INV_S,
    },
    # events per second
    "rate": {"/s": 1.0, "1/s": 1.0, "s^-1": 1.0, "counts/s": 1.0, "pairs/s": 1.0, "photons/s": 1.0},
}


def parse_quantity(value, kind, name="value"):
    """Convert ``"<number> <unit>"`` to the internal unit of ``kind``.

    ``kind`` is ``"frequency"`` (-> Gamma), ``"power"`` (-> mW), ``"time"``
    (-> s), ``"rate"`` (-> 1/s) or ``"dimensionless"``.
    """
    if kind == "dimensionless":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a plain number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{name}: physical value {value!r} needs an explicit unit, e.g. \"1.0 {_example(kind)}\"")
    m = _QUANTITY.match(value)
    if not m:
        raise ConfigError(f"{name}: cannot parse {value!r}")
    number, unit = float(m.group(1)), m.group(2).replace(" ", "").lower()
    table = _UNITS[kind]
    if unit not in table:
        raise ConfigError(f"{name}: unit {m.group(2)!r} is not a {kind} unit (allowed: {sorted(table)})")
    return number * table[unit]


def _example(kind):
    return {"frequency": "Gamma", "power": "mW", "time": "ns", "rate": "/s"}[kind]


def format_quantity(value, unit):
    return f"{value!r} {unit}"


def load_config(path):
    """Read a JSON config; a run manifest is accepted and its echoed config used."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if data.get("tool") == "heraldsim" and "config" in data:
        data = data["config"]
    return data


def require(section, key, where):
    if not isinstance(section, dict) or key not in section:
        raise ConfigError(f"missing required field '{where}.{key}'")
    return section[key]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, payload):
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_manifest(out_dir, subcommand, config, seed, unit_mode, outputs):
    payload = {
        "tool": "heraldsim",
        "version": __version__,
        "subcommand": subcommand,
        "seed": seed,
        "units": unit_mode,
        "config": config,
        "outputs": sorted(str(Path(p).name) for p in outputs),
    }
    return write_json(Path(out_dir) / "manifest.json", payload)


def write_columns(path, header_lines, names, columns):
    """Write equal-length columns as CSV with ``#`` comment header lines."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*columns):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else int(v) for v in row])
    return path


def read_columns(path):
    """(header comment lines, column names, 2-D float array)."""
    comments, rows, names = [], [], None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            elif names is None:
                names = next(csv.reader([line]))
            elif line.strip():
                rows.append([float(x) for x in next(csv.reader([line]))])
    return comments, names, np.asarray(rows, dtype=float).reshape(-1, len(names or []))


def write_histogram_csv(path, hist):
    """Histogram with per-slab columns; a ``meta:`` header line stores the scalars."""
    k = 0 if hist.slab_counts is None else hist.slab_counts.shape[0]
    meta = {
        "bin_width_s": hist.bin_width,
        "window_s": list(hist.window),
        "herald_count": hist.herald_count,
        "probe_count": hist.probe_count,
        "duration_s": hist.duration,
        "slab_heralds": [] if k == 0 else [int(v) for v in hist.slab_heralds],
        "slab_probes": [] if k == 0 else [int(v) for v in hist.slab_probes],
    }
    names = ["bin_center_s", "count"] + [f"slab_{j}" for j in range(k)]
    cols = [hist.bin_centers, np.asarray(hist.counts, dtype=np.int64)]
    cols += [hist.slab_counts[j] for j in range(k)]
    header = [
        "heraldsim coincidence histogram (start-multi-stop, probe minus signal delay)",
        "units: bin_center_s in seconds; count and slab_j in coincidences per bin",
        "meta: " + json.dumps(meta),
    ]
    return write_columns(path, header, names, cols)


def read_histogram_csv(path):
    from heraldsim.coincidence import CoincidenceHistogram

    comments, names, data = read_columns(path)
    meta_lines = [c for c in comments if c.startswith("meta:")]
    if not meta_lines:
        raise ConfigError(f"{path}: missing 'meta:' header line")
    meta = json.loads(meta_lines[0][len("meta:"):])
    counts = data[:, names.index("count")].astype(np.int64)
    slab_idx = [i for i, n in enumerate(names) if n.startswith("slab_")]
    slab_counts = data[:, slab_idx].T.astype(np.int64) if slab_idx else None
    return CoincidenceHistogram(
        bin_width=meta["bin_width_s"],
        window=tuple(meta["window_s"]),
        counts=counts,
        herald_count=meta["herald_count"],
        probe_count=meta["probe_count"],
        duration=meta["duration_s"],
        slab_counts=slab_counts,
        slab_heralds=np.asarray(meta["slab_heralds"], dtype=np.int64) if slab_idx else None,
        slab_probes=np.asarray(meta["slab_probes"], dtype=np.int64) if slab_idx else None,
    )


def write_events(path, streams):
    """Event streams as a compressed columnar ``.npz`` (times in seconds)."""
    np.savez_compressed(
        path,
        signal_s=streams.signal,
        probe_s=streams.probe,
        signal_slab=streams.signal_slab,
        probe_slab=streams.probe_slab,
        duration_s=streams.duration,
        slabs=streams.slabs,
        seed=np.uint64(streams.seed),
    )
    return Path(path)

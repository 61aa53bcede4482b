"""Event-level Monte Carlo of a heralded pair source and its coincidence histogram.

Times are in seconds. The simulated duration is split into ``slabs`` equal
time slabs, each driven by its own PCG64 stream spawned from
``SeedSequence(seed)``; the slabs double as jackknife groups for the
statistical errors reported by :func:`estimate_metrics`.

Estimation is by accidental-subtracted counting: the flat background level is
taken from bins far from the peak, the excess above it gives the correlated
count N_c, and

    R_b = N_c / (T D_s D_p),   h_s = N_c / (N_signal D_p),   h_p = N_c / (N_probe D_s).

Peak height and FWHM come from a Poisson maximum-likelihood fit of the
bin-integrated analytic profile (or, for tabulated profiles, directly from the
background-subtracted histogram).
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.optimize import least_squares

from heraldsim.errors import ConfigError, FitError, ParameterError
from heraldsim.profiles import Profile, TabulatedProfile
from heraldsim.wavepacket import WavePacket, shape_constant

DEFAULT_SLABS = 25
WINDOW_FWHMS = 30.0
BINS_PER_FWHM = 40
BACKGROUND_FWHMS = 10.0
MIN_DURATION_FWHMS = 1e4
_CHUNK_OFFSETS = 4_000_000


def profile_fwhm(profile):
    if isinstance(profile, Profile):
        return profile.fwhm
    return WavePacket(profile.times, profile.weights, sampling="bin").fwhm


def profile_shape_constant(profile):
    if isinstance(profile, Profile):
        return profile.shape_constant
    return shape_constant(WavePacket(profile.times, profile.weights, sampling="bin"))


def profile_from_wavepacket(wp, time_unit=1.0):
    """Tabulated offset distribution from a wave packet; ``time_unit`` converts its tau grid to seconds."""
    return TabulatedProfile(wp.tau_grid * time_unit, wp.values)


@dataclass(frozen=True)
class SimConfig:
    duration: float
    rate_pairs: float
    rate_noise_signal: float
    rate_noise_probe: float
    profile: object
    detection_eff_signal: float = 1.0
    detection_eff_probe: float = 1.0
    dark_rate: float = 0.0
    seed: int = 0
    slabs: int = DEFAULT_SLABS

    def __post_init__(self):
        for name in ("rate_pairs", "rate_noise_signal", "rate_noise_probe", "dark_rate"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be a finite rate >= 0")
        for name in ("detection_eff_signal", "detection_eff_probe"):
            if not 0 < getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in (0, 1]")
        if not isinstance(self.profile, (Profile, TabulatedProfile)):
            raise ConfigError("profile must be a Profile or TabulatedProfile")
        if int(self.slabs) != self.slabs or self.slabs < 1:
            raise ConfigError("slabs must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        width = profile_fwhm(self.profile)
        if not self.duration >= MIN_DURATION_FWHMS * width:
            raise ConfigError(
                f"duration {self.duration:g} s is shorter than {MIN_DURATION_FWHMS:g} x profile FWHM ({width:g} s)"
            )

    @property
    def fwhm(self):
        return profile_fwhm(self.profile)

    @property
    def h_signal(self):
        total = self.rate_pairs + self.rate_noise_signal
        return self.rate_pairs / total if total else 0.0

    @property
    def h_probe(self):
        total = self.rate_pairs + self.rate_noise_probe
        return self.rate_pairs / total if total else 0.0

    @property
    def pairing(self):
        return self.h_signal * self.h_probe

    @property
    def shape_c(self):
        return profile_shape_constant(self.profile)


@dataclass(frozen=True)
class EventStreams:
    """Time-sorted detected timestamps plus the slab of every signal event."""

    signal: np.ndarray
    probe: np.ndarray
    signal_slab: np.ndarray
    probe_slab: np.ndarray
    duration: float
    slabs: int
    pair_offsets: np.ndarray = field(default=None, repr=False)
    seed: int = 0


def _slab_events(rng, cfg, t_lo, t_hi):
    span = t_hi - t_lo
    n = rng.poisson(cfg.rate_pairs * span)
    emit = t_lo + span * rng.random(n)
    offsets = cfg.profile.sample(rng, n)
    keep_s = rng.random(n) < cfg.detection_eff_signal
    keep_p = rng.random(n) < cfg.detection_eff_probe
    sig = [emit[keep_s]]
    prb = [(emit + offsets)[keep_p]]
    for rate, eff, out in (
        (cfg.rate_noise_signal, cfg.detection_eff_signal, sig),
        (cfg.rate_noise_probe, cfg.detection_eff_probe, prb),
    ):
        m = rng.poisson(rate * eff * span)
        out.append(t_lo + span * rng.random(m))
    for out in (sig, prb):
        m = rng.poisson(cfg.dark_rate * span)
        out.append(t_lo + span * rng.random(m))
    return np.concatenate(sig), np.concatenate(prb), offsets


def simulate(config):
    """Generate detected signal and probe timestamps for ``config``."""
    cfg = config
    children = np.random.SeedSequence(int(cfg.seed)).spawn(cfg.slabs)
    edges = np.linspace(0.0, cfg.duration, cfg.slabs + 1)
    sig, prb, sig_lab, prb_lab, offs = [], [], [], [], []
    for k, child in enumerate(children):
        rng = np.random.Generator(np.random.PCG64(child))
        s, p, o = _slab_events(rng, cfg, edges[k], edges[k + 1])
        sig.append(s)
        prb.append(p)
        sig_lab.append(np.full(s.size, k, dtype=np.int32))
        prb_lab.append(np.full(p.size, k, dtype=np.int32))
        offs.append(o)
    s = np.concatenate(sig)
    p = np.concatenate(prb)
    si = np.argsort(s, kind="stable")
    pi = np.argsort(p, kind="stable")
    return EventStreams(
        signal=s[si],
        probe=p[pi],
        signal_slab=np.concatenate(sig_lab)[si],
        probe_slab=np.concatenate(prb_lab)[pi],
        duration=cfg.duration,
        slabs=cfg.slabs,
        pair_offsets=np.concatenate(offs),
        seed=int(cfg.seed),
    )


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Start-multi-stop coincidence counts.

    ``slab_counts[k]`` holds the counts heralded by signal events of slab k;
    ``counts`` is their sum. ``slab_heralds``/``slab_probes`` count signal and
    probe events per slab.
    """

    bin_width: float
    window: tuple
    counts: np.ndarray
    herald_count: int
    probe_count: int
    duration: float
    slab_counts: np.ndarray = field(default=None, repr=False)
    slab_heralds: np.ndarray = field(default=None, repr=False)
    slab_probes: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        c = np.asarray(self.counts)
        if np.any(c < 0):
            raise ParameterError("histogram counts must be non-negative")

    @property
    def n_bins(self):
        return int(np.asarray(self.counts).size)

    @property
    def bin_centers(self):
        return self.window[0] + self.bin_width * (np.arange(self.n_bins) + 0.5)

    @property
    def bin_edges(self):
        return self.window[0] + self.bin_width * np.arange(self.n_bins + 1)


def default_binning(fwhm, window_fwhms=WINDOW_FWHMS, bins_per_fwhm=BINS_PER_FWHM):
    """(bin_width, window) with bins of FWHM/40 spanning +-30 FWHM."""
    bw = fwhm / bins_per_fwhm
    half = int(round(window_fwhms * bins_per_fwhm))
    return bw, (-half * bw, half * bw)


def histogram(streams, bin_width, window):
    """Histogram every probe-minus-signal delay inside ``window = (lo, hi)``."""
    lo, hi = float(window[0]), float(window[1])
    if not (bin_width > 0 and hi > lo):
        raise ParameterError("need bin_width > 0 and window hi > lo")
    nb = int(round((hi - lo) / bin_width))
    if nb < 1 or not math.isclose(nb * bin_width, hi - lo, rel_tol=1e-9):
        raise ParameterError("window must span an integer number of bins")
    s, p = streams.signal, streams.probe
    first = np.searchsorted(p, s + lo, side="left")
    last = np.searchsorted(p, s + hi, side="left")
    per_start = last - first
    slabs = streams.slabs
    slab_counts = np.zeros((slabs, nb), dtype=np.int64)
    # chunk the starts so the expanded offset arrays stay bounded
    cum = np.cumsum(per_start)
    start = 0
    while start < s.size:
        base = cum[start - 1] if start else 0
        stop = int(np.searchsorted(cum, base + _CHUNK_OFFSETS, side="right"))
        stop = max(stop, start + 1)
        c = per_start[start:stop]
        total = int(c.sum())
        if total:
            rep = np.repeat(np.arange(start, stop), c)
            within = np.arange(total) - np.repeat(np.cumsum(c) - c, c)
            delays = p[first[rep] + within] - s[rep]
            b = np.floor((delays - lo) / bin_width).astype(np.int64)
            ok = (b >= 0) & (b < nb)
            flat = streams.signal_slab[rep[ok]].astype(np.int64) * nb + b[ok]
            slab_counts += np.bincount(flat, minlength=slabs * nb).reshape(slabs, nb)
        start = stop
    inside_s = (s >= 0) & (s < streams.duration)
    inside_p = (p >= 0) & (p < streams.duration)
    slab_heralds = np.bincount(streams.signal_slab[inside_s], minlength=slabs)
    slab_probes = np.bincount(streams.probe_slab[inside_p], minlength=slabs)
    return CoincidenceHistogram(
        bin_width=float(bin_width),
        window=(lo, hi),
        counts=slab_counts.sum(axis=0),
        herald_count=int(slab_heralds.sum()),
        probe_count=int(slab_probes.sum()),
        duration=float(streams.duration),
        slab_counts=slab_counts,
        slab_heralds=slab_heralds,
        slab_probes=slab_probes,
    )


def match_pairs(streams, max_delay):
    """Greedy nearest-unmatched-neighbour matching of signal to probe events.

    Each signal event, in time order, takes the closest probe event within
    ``max_delay`` that is still free. Returns the number of matches and their
    delays. Intended for validating the rate-ratio estimators on small runs.
    """
    s, p = streams.signal, streams.probe
    taken = np.zeros(p.size, dtype=bool)
    delays = []
    for t in s:
        i = int(np.searchsorted(p, t))
        best, best_d = -1, max_delay
        j = i - 1
        while j >= 0 and t - p[j] <= best_d:
            if not taken[j]:
                best, best_d = j, t - p[j]
                break
            j -= 1
        j = i
        while j < p.size and p[j] - t <= best_d:
            if not taken[j]:
                if p[j] - t < best_d or best < 0:
                    best, best_d = j, p[j] - t
                break
            j += 1
        if best >= 0:
            taken[best] = True
            delays.append(p[best] - t)
    return len(delays), np.asarray(delays)


@dataclass(frozen=True)
class EmpiricalMetrics:
    rate_biphoton: float
    h_signal: float
    h_probe: float
    pairing: float
    sbr: float
    sbr_max_bin: float
    fwhm_s: float
    peak_time_s: float
    shape_c: float
    quality: float
    background_per_bin: float
    n_correlated: float
    sigma: dict
    warnings: tuple = ()

    def as_dict(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k not in ("sigma", "warnings")}
        out["sigma"] = dict(self.sigma)
        out["warnings"] = list(self.warnings)
        return out


def _poisson_deviance_residuals(obs, model):
    m = np.maximum(model, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(obs > 0, obs * np.log(obs / m), 0.0)
    dev = 2.0 * (m - obs + term)
    return np.sign(obs - m) * np.sqrt(np.maximum(dev, 0.0))


def _fit_profile(kind, edges, counts, bg, start):
    """Poisson-ML fit of bg + N*(F(b) - F(a)); returns (N, t0, tau_w)."""

    def model(x):
        prof = Profile(kind, math.exp(x[2]), x[1])
        return bg + math.exp(x[0]) * np.diff(prof.cdf(edges))

    def resid(x):
        return _poisson_deviance_residuals(counts, model(x))

    n0, t0, w0 = start
    x0 = np.array([math.log(max(n0, 1.0)), t0, math.log(w0)])
    sol = least_squares(resid, x0, method="trf", x_scale=[1.0, w0, 1.0], xtol=1e-10, ftol=1e-12,
                        diff_step=1e-7, max_nfev=500)
    if not np.all(np.isfinite(sol.x)):
        raise FitError("profile fit diverged", last_iterate=sol.x)
    return math.exp(sol.x[0]), float(sol.x[1]), math.exp(sol.x[2])


def _point_estimate(counts, heralds, probes, duration, hist, cfg, fit_start=None):
    bw = hist.bin_width
    centers = hist.bin_centers
    edges = hist.bin_edges
    width = cfg.fwhm
    ds, dp = cfg.detection_eff_signal, cfg.detection_eff_probe
    prof = cfg.profile
    t_ref = prof.peak_time if isinstance(prof, Profile) else float(centers[int(np.argmax(counts))])
    far = np.abs(centers - t_ref) > BACKGROUND_FWHMS * width
    if not far.any():
        raise ParameterError("histogram window has no background bins; widen it")
    bg = float(counts[far].mean())
    excess = counts - bg
    n_corr = float(excess[~far].sum())
    notes = []
    rate = n_corr / (duration * ds * dp)
    h_s = n_corr / (heralds * dp) if heralds else float("nan")
    h_p = n_corr / (probes * ds) if probes else float("nan")
    peak_bin = float(counts.max())
    near = ~far
    if isinstance(prof, Profile):
        start = fit_start or (n_corr, prof.t0, prof.tau_w)
        n_fit, t0, tau_w = _fit_profile(prof.kind, edges[np.r_[near, False] | np.r_[False, near]],
                                        counts[near], bg, start)
        fitted = Profile(prof.kind, tau_w, t0)
        fwhm = fitted.fwhm
        peak_corr = n_fit * fitted.peak_value * bw
        peak_time = t0
        c_hat = fitted.shape_constant
        fit_state = (n_fit, t0, tau_w)
    else:
        wp = WavePacket(centers[near], np.maximum(excess[near], 0.0), sampling="bin")
        fwhm, peak_time = wp.fwhm, wp.peak_time
        peak_corr = wp.peak_value
        c_hat = shape_constant(wp)
        fit_state = None
    if bg > 0:
        sbr = peak_corr / bg
        sbr_max = (peak_bin - bg) / bg
    else:
        sbr = sbr_max = float("inf")
        notes.append("background is zero; SBR is infinite")
    return {
        "rate_biphoton": rate,
        "h_signal": h_s,
        "h_probe": h_p,
        "pairing": h_s * h_p,
        "sbr": sbr,
        "sbr_max_bin": sbr_max,
        "fwhm_s": fwhm,
        "peak_time_s": peak_time,
        "shape_c": c_hat,
        "quality": rate * fwhm * sbr,
        "background_per_bin": bg,
        "n_correlated": n_corr,
    }, notes, fit_state


_JACKKNIFE_KEYS = ("rate_biphoton", "h_signal", "h_probe", "pairing", "sbr", "fwhm_s", "quality", "shape_c")


def estimate_metrics(hist, config, streams=None, jackknife=True):
    """Empirical source metrics from a coincidence histogram.

    ``config`` supplies the detection efficiencies, the nominal FWHM (which
    sets the background region ``|tau - tau0| > 10 FWHM``) and the profile
    family used for the peak fit. ``sigma`` holds delete-one-slab jackknife
    standard errors.
    """
    cfg = config
    if hist.bin_width > cfg.fwhm / 20 * (1 + 1e-9):
        raise ParameterError("bin width must be at most FWHM/20")
    counts = np.asarray(hist.counts, dtype=float)
    point, notes, state = _point_estimate(counts, hist.herald_count, hist.probe_count, hist.duration, hist, cfg)
    if cfg.rate_pairs * cfg.fwhm > 0.3:
        notes.append("R_b * FWHM > 0.3: multi-pair (g2_c) regime, Q = C*P approximation degrades")
    sigma = {}
    k = 0 if hist.slab_counts is None else hist.slab_counts.shape[0]
    if jackknife and k >= 2 and np.isfinite(point["sbr"]):
        reps = {key: [] for key in _JACKKNIFE_KEYS}
        for j in range(k):
            c = counts - hist.slab_counts[j]
            her = hist.herald_count - hist.slab_heralds[j]
            prb = hist.probe_count - hist.slab_probes[j]
            est, _, _ = _point_estimate(c, her, prb, hist.duration * (k - 1) / k, hist, cfg, state)
            for key in _JACKKNIFE_KEYS:
                reps[key].append(est[key])
        for key, vals in reps.items():
            v = np.asarray(vals)
            sigma[key] = float(math.sqrt((k - 1) / k * np.sum((v - v.mean()) ** 2)))
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return EmpiricalMetrics(sigma=sigma, warnings=tuple(notes), **point)


def run(config, bin_width=None, window=None):
    """simulate + histogram + estimate_metrics with default binning."""
    bw, win = default_binning(config.fwhm)
    streams = simulate(config)
    hist = histogram(streams, bin_width or bw, window or win)
    return streams, hist, estimate_metrics(hist, config, streams)

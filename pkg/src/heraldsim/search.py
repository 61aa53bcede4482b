"""Constrained search for the operating point with the largest pairing probability.

A point is (pump power mW, pump detuning GHz, coupling power mW, coupling
detuning GHz). It is mapped to Rabi frequencies with
Omega_p = 2.8 sqrt(P_pump) and Omega_c = 3.0 sqrt(P_coupling) (Gamma units),
run through the theory pipeline, and accepted only if the predicted SBR
exceeds 6.5. The search is an exhaustive grid followed by an optional
Nelder-Mead polish that reflects at the bounds and rejects infeasible
vertices.
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache
import itertools
import math

import numpy as np

from heraldsim import units
from heraldsim.errors import CalibrationError, ParameterError
from heraldsim.metrics import (
    SBR_THRESHOLD,
    predict_sbr,
    probe_heralding,
    signal_heralding,
    single_photon_criterion,
)
from heraldsim.optical_response import PhysicalParams, off_resonant_excitation
from heraldsim.wavepacket import (
    CalibrationParams,
    GridSpec,
    correlation_function,
    packet_integral,
    shape_constant,
)

AXES = ("pump_power_mw", "delta_pump_ghz", "coupling_power_mw", "delta_coupling_ghz")
PUMP_RABI_PER_SQRT_MW = 2.8
COUPLING_RABI_PER_SQRT_MW = 3.0
REFERENCE_POINT = (5.5, 1.90, 17.0, 1.00)
REFERENCE_H_PROBE = 0.98


def constant_gamma(value=0.012):
    def gamma(point):
        return value

    gamma.constant = value
    return gamma


def tabulated_gamma(table, default=0.012):
    """gamma from ``{point tuple: gamma}``, falling back to ``default``."""
    lookup = {tuple(round(v, 9) for v in k): g for k, g in table.items()}

    def gamma(point):
        return lookup.get(tuple(round(v, 9) for v in point), default)

    return gamma


@dataclass(frozen=True)
class ProbeNoiseModel:
    """Uncorrelated probe-channel photon rate.

    R_pn = scale * Omega_c^2 * S(Delta_c), with S the Doppler-averaged
    one-photon excitation of the coupling field at detuning Delta_c. It grows
    linearly with coupling power and falls as the coupling field is detuned.
    """

    scale: float

    def rate(self, params):
        return self.scale * params.omega_coupling**2 * float(
            off_resonant_excitation(params.delta_coupling, params)
        )

    @classmethod
    def anchored(cls, params, noise_rate):
        base = params.omega_coupling**2 * float(off_resonant_excitation(params.delta_coupling, params))
        return cls(noise_rate / base)


def default_noise_model():
    p = PhysicalParams()
    rate = 7.5e5 * (1 / REFERENCE_H_PROBE - 1)
    return ProbeNoiseModel.anchored(p, rate)


@dataclass(frozen=True)
class SearchSpec:
    bounds: tuple = ((1.0, 11.0), (1.4, 3.4), (3.0, 36.0), (0.0, 3.0))
    steps: tuple = (0.5, 0.5, 1.0, 0.5)
    pump_rabi: float = PUMP_RABI_PER_SQRT_MW
    coupling_rabi: float = COUPLING_RABI_PER_SQRT_MW
    gamma_model: object = field(default_factory=constant_gamma)
    sbr_threshold: float = SBR_THRESHOLD
    base_params: PhysicalParams = field(default_factory=PhysicalParams)
    noise_model: ProbeNoiseModel = field(default_factory=default_noise_model)
    grid_spec: GridSpec = field(default_factory=lambda: GridSpec(delta_count=2**14))
    pump_factorized: bool = False

    def __post_init__(self):
        if len(self.bounds) != len(self.steps):
            raise ParameterError("bounds and steps must have the same length")
        for (lo, hi), st in zip(self.bounds, self.steps):
            if not lo < hi:
                raise ParameterError(f"bound [{lo}, {hi}] must satisfy lo < hi")
            if not st > 0:
                raise ParameterError("steps must be > 0")

    def axis_values(self):
        out = []
        for (lo, hi), st in zip(self.bounds, self.steps):
            n = int(math.floor((hi - lo) / st + 1e-9))
            out.append(np.round(lo + st * np.arange(n + 1), 10))
        return out

    def params_at(self, point):
        pump_mw, dp_ghz, coupling_mw, dc_ghz = point
        return replace(
            self.base_params,
            omega_pump=self.pump_rabi * math.sqrt(pump_mw),
            omega_coupling=self.coupling_rabi * math.sqrt(coupling_mw),
            delta_pump=units.ghz_to_gamma(dp_ghz),
            delta_coupling=units.ghz_to_gamma(dc_ghz),
            gamma_decoherence=self.gamma_model(tuple(point)),
        )


@lru_cache(maxsize=8192)
def _unit_pump_theory(params, grid, pump_factorized):
    """(int G2, fwhm, C) at Omega_p = 1; G2 scales exactly as Omega_p^2."""
    wp = correlation_function(params, grid_spec=grid, pump_factorized=pump_factorized)
    return packet_integral(wp), wp.fwhm, shape_constant(wp)


def theory_summary(params, grid=None, pump_factorized=False):
    """(int G2, fwhm, C) for ``params``, cached on everything but Omega_p."""
    area, fwhm, c = _unit_pump_theory(replace(params, omega_pump=1.0), grid or GridSpec(), pump_factorized)
    return area * params.omega_pump**2, fwhm, c


@dataclass(frozen=True)
class PointEvaluation:
    point: tuple
    pairing: float
    sbr: float
    quality: float
    feasible: bool
    metrics: dict


def evaluate_point(point, spec, cal=None):
    """Pairing probability, predicted SBR and Q at ``point``."""
    cal = cal or CalibrationParams()
    params = spec.params_at(point)
    area, fwhm_tau, c = theory_summary(params, spec.grid_spec, spec.pump_factorized)
    rate = cal.rate_proportionality * area
    fwhm_s = units.tau_to_seconds(fwhm_tau)
    noise = spec.noise_model.rate(params)
    metrics = {"rate_biphoton": rate, "fwhm_s": fwhm_s, "shape_c": c, "noise_rate_probe": noise,
               "gamma": params.gamma_decoherence}
    if rate == 0:
        metrics.update(h_signal=0.0, h_probe=0.0)
        return PointEvaluation(tuple(point), 0.0, 0.0, 0.0, False, metrics)
    h_s = signal_heralding(rate, params, cal)
    h_p = probe_heralding(rate, noise)
    pairing = h_s * h_p
    sbr = predict_sbr(rate, fwhm_s, c, pairing)
    crit = single_photon_criterion(sbr, spec.sbr_threshold)
    metrics.update(h_signal=h_s, h_probe=h_p, cross_correlation=crit.cross_correlation)
    return PointEvaluation(tuple(point), pairing, sbr, c * pairing, crit.passed, metrics)


def callable_evaluator(func, threshold=SBR_THRESHOLD):
    """Adapt ``func(point) -> (P, SBR)`` to the evaluator interface."""

    def evaluate(point):
        pairing, sbr = func(np.asarray(point, dtype=float))
        return PointEvaluation(tuple(float(v) for v in point), float(pairing), float(sbr),
                               float("nan"), bool(sbr > threshold), {})

    return evaluate


@dataclass
class SearchResult:
    best_point: tuple
    best_pairing: float
    best: PointEvaluation
    log: list
    status: str
    optimum_excluded: bool = False
    unconstrained_best: PointEvaluation = None

    @property
    def feasible(self):
        return self.best is not None


def _better(a, b):
    return b is None or a.pairing > b.pairing


def _log_row(ev, error=None):
    row = {"point": ev.point if ev else None}
    if ev is not None:
        row.update(pairing=ev.pairing, sbr=ev.sbr, quality=ev.quality, feasible=ev.feasible)
    if error:
        row["error"] = error
    return row


def _safe_evaluate(evaluate, point):
    try:
        return evaluate(point), None
    except CalibrationError as exc:
        return None, str(exc)


def grid_search(spec, cal=None, evaluator=None):
    """Exhaustive grid in lexicographic point order; ties keep the earliest point."""
    evaluate = evaluator or (lambda pt: evaluate_point(pt, spec, cal))
    best = free_best = None
    log = []
    for point in itertools.product(*spec.axis_values()):
        point = tuple(float(v) for v in point)
        ev, err = _safe_evaluate(evaluate, point)
        if ev is None:
            log.append({"point": point, "error": err, "feasible": False})
            continue
        log.append(_log_row(ev))
        if _better(ev, free_best):
            free_best = ev
        if ev.feasible and _better(ev, best):
            best = ev
    if best is None:
        return SearchResult(None, float("nan"), None, log, "no-feasible-point", True, free_best)
    excluded = free_best.pairing > best.pairing
    return SearchResult(best.point, best.pairing, best, log, "ok", excluded, free_best)


def _reflect(x, lo, hi):
    x = np.array(x, dtype=float)
    for _ in range(4):
        x = np.where(x < lo, 2 * lo - x, x)
        x = np.where(x > hi, 2 * hi - x, x)
    return np.clip(x, lo, hi)


def _nelder_mead(x0, score, size, steps, hi, max_iter):
    """One Nelder-Mead run maximizing ``score`` from an axis-aligned simplex."""
    verts = [x0]
    for i in range(x0.size):
        v = x0.copy()
        v[i] += size if (x0[i] + size) * steps[i] <= hi[i] else -size
        verts.append(v)
    simplex = [score(v) for v in verts]
    for _ in range(max_iter):
        simplex.sort(key=lambda t: -t[0])
        best_y = simplex[0][1]
        diam = max(np.max(np.abs(t[1] - best_y)) for t in simplex)
        if diam < 0.1 and np.isfinite(simplex[0][0]):
            break
        centroid = np.mean([t[1] for t in simplex[:-1]], axis=0)
        worst = simplex[-1]
        refl = score(centroid + (centroid - worst[1]))
        if refl[0] > simplex[0][0]:
            exp = score(centroid + 2.0 * (centroid - worst[1]))
            simplex[-1] = exp if exp[0] > refl[0] else refl
            continue
        if refl[0] > simplex[-2][0]:
            simplex[-1] = refl
            continue
        if refl[0] > worst[0]:
            con = score(centroid + 0.5 * (refl[1] - centroid))
            if con[0] >= refl[0]:
                simplex[-1] = con
                continue
        else:
            con = score(centroid + 0.5 * (worst[1] - centroid))
            if con[0] > worst[0]:
                simplex[-1] = con
                continue
        head = simplex[0]
        simplex = [head] + [score(head[1] + 0.5 * (t[1] - head[1])) for t in simplex[1:]]
    simplex.sort(key=lambda t: -t[0])
    return simplex[0]


def refine(start, spec, cal=None, evaluator=None, max_iter=400, restarts=8):
    """Nelder-Mead polish from ``start`` maximizing P.

    Coordinates are scaled by the grid steps. Trial vertices leaving the box
    are reflected back in; infeasible vertices score -inf. A run stops once
    every vertex lies within step/10 of the best one on every axis. Hard
    rejection can stall a simplex against an active constraint, so the run is
    restarted from its best vertex with a fresh simplex until a restart no
    longer improves P.
    """
    evaluate = evaluator or (lambda pt: evaluate_point(pt, spec, cal))
    steps = np.asarray(spec.steps, dtype=float)
    lo = np.array([b[0] for b in spec.bounds], dtype=float)
    hi = np.array([b[1] for b in spec.bounds], dtype=float)
    log = []

    def score(y):
        x = _reflect(y * steps, lo, hi)
        ev, err = _safe_evaluate(evaluate, tuple(float(v) for v in x))
        if ev is None:
            log.append({"point": tuple(x), "error": err, "feasible": False})
            return -math.inf, x / steps, None
        log.append(_log_row(ev))
        return (ev.pairing if ev.feasible else -math.inf), x / steps, ev

    best = score(_reflect(np.asarray(start, dtype=float), lo, hi) / steps)
    size = 1.0
    for _ in range(restarts + 1):
        found = _nelder_mead(best[1], score, size, steps, hi, max_iter)
        if not found[0] > best[0]:
            if size <= 0.25:
                break
            size /= 2
            continue
        best = found
    s, y, ev = best
    if not np.isfinite(s):
        return SearchResult(None, float("nan"), None, log, "no-feasible-point")
    return SearchResult(ev.point, ev.pairing, ev, log, "ok")


def search(spec, cal=None, evaluator=None, polish=True):
    """grid_search, then refine from the grid optimum when one exists."""
    grid = grid_search(spec, cal, evaluator)
    if not polish or not grid.feasible:
        return grid
    fine = refine(grid.best_point, spec, cal, evaluator)
    log = grid.log + fine.log
    if fine.feasible and fine.best_pairing > grid.best_pairing:
        return SearchResult(fine.best_point, fine.best_pairing, fine.best, log, "ok",
                            grid.optimum_excluded, grid.unconstrained_best)
    grid.log = log
    return grid

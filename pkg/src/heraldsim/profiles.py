"""Normalized biphoton temporal profiles.

The four analytic shapes, each with unit area and width parameter ``tau_w``:

    single-exp  (1/tau_w) exp(-(t-t0)/tau_w)            t >= t0
    double-exp  (1/2tau_w) exp(-|t-t0|/tau_w)
    gaussian    (1/(sqrt(pi) tau_w)) exp(-(t-t0)^2/tau_w^2)
    square      1/tau_w                                  t0 <= t <= t0+tau_w

plus :class:`TabulatedProfile` for a sampled wave packet. Every profile can
evaluate its density, report its FWHM and shape constant C = f(peak)*FWHM, and
draw offsets (inverse CDF for the analytic shapes, Walker alias table for the
tabulated one).
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import erf, erfinv

from heraldsim.errors import ParameterError

PROFILE_KINDS = ("square", "single-exp", "double-exp", "gaussian")


@dataclass(frozen=True)
class Profile:
    """One of the analytic unit-area shapes."""

    kind: str
    tau_w: float
    t0: float = 0.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ParameterError(f"unknown profile {self.kind!r}; expected one of {PROFILE_KINDS}")
        if not (self.tau_w > 0 and math.isfinite(self.tau_w)):
            raise ParameterError("tau_w must be a positive finite number")

    def pdf(self, t):
        x = (np.asarray(t, dtype=float) - self.t0) / self.tau_w
        w = self.tau_w
        if self.kind == "square":
            return np.where((x >= 0) & (x <= 1), 1.0 / w, 0.0)
        if self.kind == "single-exp":
            return np.where(x >= 0, np.exp(-np.maximum(x, 0.0)) / w, 0.0)
        if self.kind == "double-exp":
            return np.exp(-np.abs(x)) / (2 * w)
        return np.exp(-x * x) / (math.sqrt(math.pi) * w)

    def cdf(self, t):
        x = (np.asarray(t, dtype=float) - self.t0) / self.tau_w
        if self.kind == "square":
            return np.clip(x, 0.0, 1.0)
        if self.kind == "single-exp":
            return -np.expm1(-np.maximum(x, 0.0))
        if self.kind == "double-exp":
            return np.where(x < 0, 0.5 * np.exp(np.minimum(x, 0.0)), 1 - 0.5 * np.exp(-np.maximum(x, 0.0)))
        return 0.5 * (1 + erf(x))

    def sample(self, rng, size):
        """Inverse-CDF draws of the offset from ``t0``'s origin."""
        u = rng.random(size)
        w = self.tau_w
        if self.kind == "square":
            x = u * w
        elif self.kind == "single-exp":
            x = -w * np.log1p(-u)
        elif self.kind == "double-exp":
            # Laplace: split at u = 1/2
            x = np.where(u < 0.5, w * np.log(2 * u), -w * np.log(2 * (1 - u)))
        else:
            x = w * erfinv(2 * u - 1)
        return self.t0 + x

    @property
    def fwhm(self):
        w = self.tau_w
        return {
            "square": w,
            "single-exp": w * math.log(2),
            "double-exp": 2 * w * math.log(2),
            "gaussian": 2 * w * math.sqrt(math.log(2)),
        }[self.kind]

    @property
    def peak_time(self):
        return self.t0

    @property
    def peak_value(self):
        w = self.tau_w
        return {
            "square": 1 / w,
            "single-exp": 1 / w,
            "double-exp": 1 / (2 * w),
            "gaussian": 1 / (math.sqrt(math.pi) * w),
        }[self.kind]

    @property
    def shape_constant(self):
        return self.peak_value * self.fwhm

    @property
    def support(self):
        """Interval holding all but ~1e-12 of the probability."""
        w = self.tau_w
        lo, hi = {
            "square": (0.0, w),
            "single-exp": (0.0, 28 * w),
            "double-exp": (-28 * w, 28 * w),
            "gaussian": (-5.5 * w, 5.5 * w),
        }[self.kind]
        return self.t0 + lo, self.t0 + hi

    @classmethod
    def from_fwhm(cls, kind, fwhm, t0=0.0):
        unit = cls(kind, 1.0).fwhm
        return cls(kind, fwhm / unit, t0)


@dataclass(frozen=True)
class TabulatedProfile:
    """Piecewise-constant density built from a sampled (non-negative) wave packet.

    Bin ``k`` covers ``[t_k - h/2, t_k + h/2)``. Sampling picks a bin with a
    Walker alias table and a uniform position inside it.
    """

    times: np.ndarray
    weights: np.ndarray
    _prob: np.ndarray = field(init=False, repr=False, compare=False)
    _alias: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if t.ndim != 1 or t.shape != w.shape or t.size < 2:
            raise ParameterError("times and weights must be equal-length 1-D arrays")
        if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
            raise ParameterError("weights must be finite, non-negative and not all zero")
        h = np.diff(t)
        if np.any(h <= 0) or not np.allclose(h, h[0], rtol=1e-9, atol=0):
            raise ParameterError("times must be uniformly increasing")
        prob, alias = _build_alias(w / w.sum())
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_prob", prob)
        object.__setattr__(self, "_alias", alias)

    @property
    def step(self):
        return float(self.times[1] - self.times[0])

    def pdf(self, t):
        h = self.step
        idx = np.floor((np.asarray(t, dtype=float) - self.times[0]) / h + 0.5).astype(int)
        inside = (idx >= 0) & (idx < self.times.size)
        dens = self.weights / (self.weights.sum() * h)
        return np.where(inside, dens[np.clip(idx, 0, self.times.size - 1)], 0.0)

    def sample(self, rng, size):
        n = self.times.size
        k = rng.integers(0, n, size)
        take = rng.random(size) < self._prob[k]
        k = np.where(take, k, self._alias[k])
        return self.times[k] + (rng.random(size) - 0.5) * self.step

    @property
    def support(self):
        h = self.step
        nz = np.flatnonzero(self.weights)
        return self.times[nz[0]] - h / 2, self.times[nz[-1]] + h / 2


def _build_alias(p):
    """Vose's alias method; returns (acceptance probability, alias index)."""
    n = p.size
    scaled = p * n
    prob = np.ones(n)
    alias = np.arange(n)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] -= 1.0 - scaled[s]
        (small if scaled[g] < 1.0 else large).append(g)
    return prob, alias

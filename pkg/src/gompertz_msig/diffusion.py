"""
The multi-sigmoidal Gompertz diffusion process.

``dX = h(t) X dt + sigma X dW`` with ``h`` the growth rate of the curve in
:mod:`gompertz_msig.polycurve`. The solution is lognormal,

    X(t) = X0 exp(H(t0, t) + sigma (W(t) - W(t0))),
    H(s, t) = -alpha (exp(-Q(t)) - exp(-Q(s))) - sigma^2 (t - s) / 2,

so paths are simulated exactly on any grid.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .polycurve import CurveParams, DomainError, curve_value, poly_eval

RNG_NAME = "numpy.PCG64"
GAUSSIAN_METHOD = "ziggurat (numpy Generator.standard_normal)"
STREAM_RULE = "SeedSequence(seed, spawn_key=(path_index,))"


@dataclass(frozen=True)
class ProcessParams:
    """Drift shape ``curve`` and infinitesimal variance ``sigma2``."""

    curve: CurveParams
    sigma2: float

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")

    @property
    def alpha(self):
        return self.curve.alpha

    @property
    def q(self):
        return self.curve.q

    @property
    def sigma(self):
        return math.sqrt(self.sigma2)


@dataclass(frozen=True)
class InitialLaw:
    """Law of ``X(t0)``: degenerate at ``x0`` or lognormal ``(mu1, sigma1_sq)``."""

    kind: str
    x0: float | None = None
    mu1: float | None = None
    sigma1_sq: float = 0.0

    def __post_init__(self):
        if self.kind == "degenerate":
            if self.x0 is None or not self.x0 > 0:
                raise ValueError("degenerate initial law needs x0 > 0")
        elif self.kind == "lognormal":
            if self.mu1 is None or self.sigma1_sq < 0:
                raise ValueError("lognormal initial law needs mu1 and sigma1_sq >= 0")
        else:
            raise ValueError(f"unknown initial law {self.kind!r}")

    @classmethod
    def degenerate(cls, x0):
        return cls("degenerate", x0=float(x0))

    @classmethod
    def lognormal(cls, mu1, sigma1_sq):
        return cls("lognormal", mu1=float(mu1), sigma1_sq=float(sigma1_sq))

    @property
    def log_mean(self):
        return math.log(self.x0) if self.kind == "degenerate" else self.mu1

    @property
    def log_var(self):
        return 0.0 if self.kind == "degenerate" else self.sigma1_sq

    @property
    def expectation(self):
        """``E[X0]``."""
        return math.exp(self.log_mean + 0.5 * self.log_var)


@dataclass(frozen=True)
class SamplePathSet:
    """``d`` discretely observed paths sharing the first instant ``t0``.

    Attributes
    ----------
    times, values : tuple of 1-D arrays
        Observation instants (strictly ascending) and positive values, one
        pair per path.
    """

    times: tuple
    values: tuple

    def __post_init__(self):
        times = tuple(np.asarray(t, dtype=float) for t in self.times)
        values = tuple(np.asarray(x, dtype=float) for x in self.values)
        if not times:
            raise ValueError("need at least one path")
        if len(times) != len(values):
            raise ValueError("times and values differ in path count")
        t0 = times[0][0] if times[0].size else None
        for i, (t, x) in enumerate(zip(times, values)):
            if t.ndim != 1 or t.shape != x.shape or t.size == 0:
                raise ValueError(f"path {i + 1}: times and values must be 1-D of equal nonzero length")
            if np.any(np.diff(t) <= 0):
                raise ValueError(f"path {i + 1}: times must be strictly ascending")
            if np.any(~(x > 0)):
                raise ValueError(f"path {i + 1}: values must be positive")
            if t[0] != t0:
                raise ValueError(f"path {i + 1}: first instant {t[0]} differs from t0={t0}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_grid(cls, times, values):
        """Build from a shared grid and a ``(d, n)`` value array."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        times = np.asarray(times, dtype=float)
        return cls(tuple(times for _ in range(len(values))), tuple(values))

    @property
    def t0(self) -> float:
        return float(self.times[0][0])

    @property
    def d(self) -> int:
        return len(self.times)

    @property
    def has_common_grid(self) -> bool:
        first = self.times[0]
        return all(t.shape == first.shape and np.array_equal(t, first) for t in self.times)

    def grid(self):
        """Return ``(times, values)`` with values shaped ``(d, n)``; needs a common grid."""
        if not self.has_common_grid:
            raise ValueError("cross-sectional statistics require a common grid")
        return self.times[0], np.vstack(self.values)

    def shifted(self, offset: float) -> "SamplePathSet":
        return SamplePathSet(tuple(t - offset for t in self.times), self.values)


def big_h(pp: ProcessParams, s, t):
    """Log-scale drift integral ``H(s, t)`` for ``s <= t``."""
    s_arr, t_arr = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
    if np.any(s_arr > t_arr):
        raise DomainError("big_h requires s <= t")
    q = pp.curve.q
    out = (-pp.alpha * (np.exp(-poly_eval(q, t_arr)) - np.exp(-poly_eval(q, s_arr)))
           - 0.5 * pp.sigma2 * (t_arr - s_arr))
    return out if np.ndim(out) else float(out)


def transition_logpdf(pp: ProcessParams, y, s, x, t):
    """Log-density at ``x`` of ``X(t) | X(s) = y``, lognormal
    ``(ln y + H(s, t), sigma^2 (t - s))``."""
    if not np.all(np.asarray(s) < np.asarray(t)):
        raise DomainError("transition requires s < t")
    if pp.sigma2 == 0:
        raise DomainError("degenerate transition")
    var = pp.sigma2 * (np.asarray(t, dtype=float) - np.asarray(s, dtype=float))
    loc = np.log(y) + big_h(pp, s, t)
    lx = np.log(x)
    out = -lx - 0.5 * np.log(2 * np.pi * var) - (lx - loc) ** 2 / (2 * var)
    return out if np.ndim(out) else float(out)


def mean(pp: ProcessParams, init: InitialLaw, t, t0: float):
    """``E[X(t)]``."""
    return curve_value(pp.curve, init.expectation, t0, t)


def conditional_mean(pp: ProcessParams, x0: float, t0: float, t):
    """``E[X(t) | X(t0) = x0]``; does not depend on ``sigma2``."""
    return curve_value(pp.curve, x0, t0, t)


def fdd_params(pp: ProcessParams, init: InitialLaw, t0: float, times):
    """Parameters ``(eps, Sigma)`` of the joint lognormal law of ``X(times)``."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise DomainError("times must be strictly ascending")
    if times.size and times[0] < t0:
        raise DomainError("times must not precede t0")
    eps = init.log_mean + np.asarray(big_h(pp, t0, times))
    cov = init.log_var + pp.sigma2 * (np.minimum.outer(times, times) - t0)
    return eps, cov


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get("GOMPERTZ_MSIG_THREADS", "1")))
    except ValueError:
        return 1


def _path_stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def simulate(pp: ProcessParams, init: InitialLaw, t0: float, dt: float, n_points: int,
             n_paths: int, seed: int) -> SamplePathSet:
    """Exact simulation on the grid ``t0 + j dt``, ``j = 0..n_points-1``.

    Path ``i`` draws from its own PCG64 substream derived from ``(seed, i)``:
    first ``X0`` (lognormal case only), then ``n_points - 1`` standard normal
    increments. Output does not depend on ``n_paths`` or on threading.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    if n_points < 2 or n_paths < 1:
        raise DomainError("need n_points >= 2 and n_paths >= 1")
    times = t0 + dt * np.arange(n_points)
    drift = np.concatenate(([0.0], np.asarray(big_h(pp, t0, times[1:]))))
    sigma = pp.sigma
    sqdt = math.sqrt(dt)

    def one(i):
        rng = _path_stream(seed, i)
        if init.kind == "lognormal":
            x0 = math.exp(init.mu1 + math.sqrt(init.sigma1_sq) * rng.standard_normal())
        else:
            x0 = init.x0
        w = np.concatenate(([0.0], np.cumsum(sqdt * rng.standard_normal(n_points - 1))))
        return x0 * np.exp(drift + sigma * w)

    workers = min(_max_workers(), n_paths)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            values = list(ex.map(one, range(n_paths)))
    else:
        values = [one(i) for i in range(n_paths)]
    return SamplePathSet(tuple(times for _ in range(n_paths)), tuple(values))


def subsample(sps: SamplePathSet, step: int) -> SamplePathSet:
    """Keep observations ``0, step, 2 step, ...`` of every path."""
    step = int(step)
    if step < 1:
        raise DomainError("step must be >= 1")
    for i, t in enumerate(sps.times):
        if step > t.size:
            raise DomainError(f"step {step} exceeds length of path {i + 1}")
    return SamplePathSet(tuple(t[::step] for t in sps.times), tuple(x[::step] for x in sps.values))


def cross_sectional_means(sps: SamplePathSet):
    """Arithmetic and geometric means across paths at each grid instant."""
    times, values = sps.grid()
    m = values.mean(axis=0)
    # AM >= GM holds exactly; clip rounding noise where all values coincide
    mg = np.minimum(np.exp(np.log(values).mean(axis=0)), m)
    return times, m, mg


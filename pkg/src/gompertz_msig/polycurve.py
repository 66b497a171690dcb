"""
Deterministic calculus of the multi-sigmoidal Gompertz curve.

The curve with initial condition ``f(t0) = f0`` is

.. math::

    f(t) = f_0 \\exp\\left(-\\alpha\\left(e^{-Q(t)} - e^{-Q(t_0)}\\right)\\right),

where ``Q`` is a polynomial with zero constant term. It solves
``f' = f h`` with growth rate ``h(t) = alpha P(t) exp(-Q(t))``, ``P = Q'``,
and tends to the carrying capacity ``f0 exp(alpha exp(-Q(t0)))``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import bisect
from scipy.special import comb


class DomainError(ValueError):
    """Argument outside the domain of a curve or process function."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial ``c0 + c1 t + ... + cm t^m``.

    Parameters
    ----------
    coeffs : sequence of float
        Coefficients in ascending order; ``coeffs[0]`` is the constant term.
    """

    coeffs: tuple[float, ...]

    def __init__(self, coeffs: Sequence[float]):
        c = tuple(float(x) for x in coeffs)
        if not c:
            c = (0.0,)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_beta(cls, beta: Sequence[float]) -> "Polynomial":
        """Build ``Q(t) = sum_l beta_l t^l`` (no constant term) from ``beta_1..beta_p``."""
        return cls((0.0, *beta))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def beta(self) -> np.ndarray:
        """Coefficients ``c1..cm`` (the non-constant part)."""
        return np.asarray(self.coeffs[1:])

    @property
    def leading(self) -> float:
        return self.coeffs[-1]

    def __call__(self, t):
        return poly_eval(self, t)


def poly_eval(p: Polynomial, t):
    """Evaluate ``p`` at ``t`` (scalar or array) in Horner form."""
    t = np.asarray(t, dtype=float)
    acc = np.zeros_like(t)
    for c in reversed(p.coeffs):
        acc = acc * t + c
    return acc if acc.ndim else float(acc)


def poly_derivative(p: Polynomial) -> Polynomial:
    """Return the derivative of ``p``; raises on a constant polynomial."""
    if p.degree < 1:
        raise DomainError("constant polynomial")
    return Polynomial([l * c for l, c in enumerate(p.coeffs)][1:])


@dataclass(frozen=True)
class CurveParams:
    """Shape parameters ``theta = (alpha, beta)`` of the curve.

    ``q`` must have a zero constant term and degree at least one. By default
    ``alpha > 0`` and a positive leading coefficient are enforced; estimator
    output is built with ``validate=False`` and only warned about.
    """

    alpha: float
    q: Polynomial
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        if self.q.coeffs[0] != 0.0:
            raise ValueError("Q must have a zero constant term")
        if self.q.degree < 1:
            raise ValueError("Q must have degree >= 1")
        problems = []
        if not self.alpha > 0:
            problems.append(f"alpha={self.alpha!r} is not positive")
        if not self.q.leading > 0:
            problems.append(f"leading coefficient {self.q.leading!r} is not positive")
        if problems:
            msg = "; ".join(problems)
            if self.validate:
                raise ValueError(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=3)

    @classmethod
    def from_beta(cls, alpha: float, beta: Sequence[float], validate: bool = True):
        return cls(alpha, Polynomial.from_beta(beta), validate=validate)

    @property
    def beta(self) -> np.ndarray:
        return self.q.beta

    @property
    def degree(self) -> int:
        return self.q.degree

    @property
    def p(self) -> Polynomial:
        """Derivative ``P = Q'``."""
        return poly_derivative(self.q)


@dataclass(frozen=True)
class InflectionSet:
    instants: tuple[float, ...]
    residuals: tuple[float, ...]

    def __len__(self):
        return len(self.instants)

    def __iter__(self):
        return iter(self.instants)


def curve_value(cp: CurveParams, f0: float, t0: float, t):
    """Curve value at ``t >= t0`` for initial condition ``f(t0) = f0``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < t0):
        raise DomainError(f"t must be >= t0={t0}")
    if f0 <= 0:
        raise DomainError("f0 must be positive")
    q0 = poly_eval(cp.q, t0)
    out = f0 * np.exp(-cp.alpha * (np.exp(-poly_eval(cp.q, t_arr)) - math.exp(-q0)))
    return out if out.ndim else float(out)


def carrying_capacity(cp: CurveParams, f0: float, t0: float) -> float:
    """Upper limit ``f0 exp(alpha exp(-Q(t0)))`` of the curve."""
    return f0 * math.exp(cp.alpha * math.exp(-poly_eval(cp.q, t0)))


def growth_rate(cp: CurveParams, t):
    """Relative growth rate ``alpha P(t) exp(-Q(t))``."""
    t = np.asarray(t, dtype=float)
    out = cp.alpha * poly_eval(cp.p, t) * np.exp(-poly_eval(cp.q, t))
    return out if out.ndim else float(out)


def curve_second_derivative(cp: CurveParams, f0: float, t0: float, t):
    """Second time derivative of :func:`curve_value`.

    Uses ``f'' = f (h^2 + h')`` with ``h' = alpha (P' - P^2) exp(-Q)``.
    """
    f = np.asarray(curve_value(cp, f0, t0, t))
    t = np.asarray(t, dtype=float)
    P = poly_eval(cp.p, t)
    dP = poly_eval(poly_derivative(cp.p), t) if cp.p.degree >= 1 else np.zeros_like(t)
    eq = np.exp(-poly_eval(cp.q, t))
    h = cp.alpha * P * eq
    out = f * (h * h + cp.alpha * (dP - P * P) * eq)
    return out if out.ndim else float(out)


def inflection_residual(cp: CurveParams, t):
    """``P'(t) - P(t)^2 (1 - alpha exp(-Q(t)))``; zero at inflection candidates.

    For ``alpha > 0`` its sign equals that of the curve's second derivative.
    """
    t = np.asarray(t, dtype=float)
    P = poly_eval(cp.p, t)
    dP = poly_eval(poly_derivative(cp.p), t) if cp.p.degree >= 1 else np.zeros_like(t)
    out = dP - P * P * (1.0 - cp.alpha * np.exp(-poly_eval(cp.q, t)))
    return out if out.ndim else float(out)


def default_grid_n(t_lo: float, t_hi: float) -> int:
    return max(1000, int(math.ceil(10 * (t_hi - t_lo))))


def locate_sign_changes(fn, t_lo, t_hi, grid_n, xtol=1e-8, dedup_tol=1e-6):
    """Roots of ``fn`` where it changes sign, by grid bracketing and bisection.

    Tangential zeros (no sign change) are not reported. Returns an ascending
    array of roots.
    """
    if not t_lo < t_hi:
        raise DomainError("need t_lo < t_hi")
    if grid_n < 2:
        raise DomainError("grid_n must be >= 2")
    grid = np.linspace(t_lo, t_hi, int(grid_n))
    vals = np.asarray(fn(grid), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NumericError("non-finite residual on the search grid")
    sgn = np.sign(vals)
    roots = []
    for i in range(len(grid) - 1):
        a, b = grid[i], grid[i + 1]
        if sgn[i] == 0:
            # exact grid zero: keep only if neighbours straddle it
            left = sgn[i - 1] if i > 0 else 0
            if left != 0 and sgn[i + 1] != 0 and left != sgn[i + 1]:
                roots.append(a)
            continue
        if sgn[i + 1] != 0 and sgn[i] != sgn[i + 1]:
            roots.append(bisect(fn, a, b, xtol=xtol, maxiter=200))
    out = []
    for r in roots:
        if not out or r - out[-1] > dedup_tol:
            out.append(float(r))
    return np.asarray(out)


def find_inflections(cp: CurveParams, t_lo: float, t_hi: float, grid_n: int | None = None) -> InflectionSet:
    """Inflection instants of the curve inside ``[t_lo, t_hi]``.

    Sign changes of :func:`inflection_residual` are bracketed on a uniform
    grid of ``grid_n`` points and refined by bisection to ``1e-8``. Each root
    is kept only if the second derivative of the curve changes sign across it.
    """
    if grid_n is None:
        grid_n = default_grid_n(t_lo, t_hi)
    roots = locate_sign_changes(lambda t: inflection_residual(cp, t), t_lo, t_hi, grid_n)
    kept, res = [], []
    spacing = (t_hi - t_lo) / (grid_n - 1)
    for r in roots:
        delta = min(1e-4, 0.25 * spacing)
        lo, hi = max(t_lo, r - delta), min(t_hi, r + delta)
        # the curve is defined from any origin <= lo; its shape does not depend on f0
        d2 = curve_second_derivative(cp, 1.0, lo, np.array([lo, hi]))
        if np.sign(d2[0]) != np.sign(d2[1]):
            kept.append(float(r))
            res.append(float(inflection_residual(cp, r)))
    return InflectionSet(tuple(kept), tuple(res))


def shift_time_origin(gamma: Polynomial, eta: float, t0: float) -> CurveParams:
    """Map parameters of the time-shifted process back to original time.

    Given ``Y(s) = X(s + t0)`` with shape ``(eta, gamma)``, returns
    ``(alpha, beta)`` with ``Qgamma(t - t0) = beta0 + Qbeta(t)`` and
    ``alpha = eta exp(-beta0)``.
    """
    if gamma.coeffs[0] != 0.0:
        raise ValueError("gamma must have a zero constant term")
    p = gamma.degree
    if p < 1:
        raise ValueError("gamma must have degree >= 1")
    g = gamma.coeffs
    new = [sum(g[j] * comb(j, m, exact=True) * (-t0) ** (j - m) for j in range(m, p + 1))
           for m in range(p + 1)]
    beta0 = new[0]
    return CurveParams(eta * math.exp(-beta0), Polynomial((0.0, *new[1:])), validate=False)

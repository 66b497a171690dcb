"""
Goodness of fit and choice of the polynomial degree.

Fitted models are compared with the data through

* RAE, the mean absolute relative error between sample and fitted means;
* AIC and BIC;
* the resistor-average distance between the one-dimensional lognormal laws
  of the data and of the model at each observation instant, summarised by
  its mean and median over instants.

:func:`forward_select` adds degrees one at a time and stops one degree after
the first non-improvement (odd and even degrees behave differently, so a
single failure is not conclusive).
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .diffusion import InitialLaw, ProcessParams, SamplePathSet, big_h, cross_sectional_means, fdd_params
from .mle import FitError, MleResult, SolverOptions, fit
from .polycurve import CurveParams, DomainError, InflectionSet, find_inflections, locate_sign_changes, default_grid_n

log = logging.getLogger(__name__)

CRITERIA = ("rae", "aic", "bic", "dra_mean", "dra_median")


def rae(sps: SamplePathSet, fitted: MleResult) -> float:
    """Mean over the grid of ``|m_i - E_hat[X(t_i)]| / m_i``."""
    times, m, _ = cross_sectional_means(sps)
    if np.any(m <= 0):
        raise DomainError("sample means must be positive")
    return float(np.mean(np.abs(m - fitted.fitted_mean(times)) / m))


def n_parameters(mle: MleResult) -> int:
    """``p + 2`` drift/diffusion parameters, plus two for a lognormal start."""
    return mle.degree + 2 + (0 if mle.degenerate_start else 2)


def n_observations(mle: MleResult) -> int:
    """Transitions, plus the initial values when their law is estimated."""
    return mle.n_transitions + (0 if mle.degenerate_start else mle.d)


def aic_bic(mle: MleResult, n_obs: int | None = None, q: int | None = None):
    q = n_parameters(mle) if q is None else q
    n_obs = n_observations(mle) if n_obs is None else n_obs
    return 2 * q - 2 * mle.loglik, q * math.log(n_obs) - 2 * mle.loglik


def kl_gaussian(mean_p, var_p, mean_q, var_q):
    """``KL(N(mean_p, var_p) || N(mean_q, var_q))``."""
    return 0.5 * (math.log(var_q / var_p) + var_p / var_q + (mean_p - mean_q) ** 2 / var_q - 1.0)


def resistor_average(d_fwd: float, d_bwd: float) -> float:
    """``d_fwd d_bwd / (d_fwd + d_bwd)``, taken as 0 when both vanish."""
    if d_fwd < 0 or d_bwd < 0:
        raise ValueError("divergences must be nonnegative")
    s = d_fwd + d_bwd
    return 0.0 if s == 0 else d_fwd * d_bwd / s


def _model_log_moments(mle: MleResult, t):
    """Log-scale mean and variance of the fitted law of ``X(t)``."""
    xi = mle.xi_hat
    return (math.log(mle.x0_expectation) + big_h(xi, mle.t0, t), xi.sigma2 * (t - mle.t0))


def _sample_log_moments(m_i, mg_i):
    return math.log(mg_i), 2.0 * math.log(m_i / mg_i)


def kl_sample_vs_model(m_i, mg_i, t_i, t0, mle: MleResult) -> float:
    """``D_KL(sample || model)`` at one instant.

    The sample law at ``t_i`` is lognormal with log-mean ``ln m^g_i`` and
    log-variance ``2 ln(m_i / m^g_i)``; the model law has log-mean
    ``ln E_hat[X0] + H_hat(t0, t_i)`` and log-variance ``sigma_hat^2 (t_i - t0)``.
    """
    if not t_i > t0:
        raise DomainError("t_i = t0: model variance is zero")
    mu_s, var_s = _sample_log_moments(m_i, mg_i)
    if not var_s > 0:
        raise DomainError("zero sample variance")
    mu_m, var_m = _model_log_moments(mle, t_i)
    return kl_gaussian(mu_s, var_s, mu_m, var_m)


def kl_model_vs_sample(m_i, mg_i, t_i, t0, mle: MleResult) -> float:
    """``D_KL(model || sample)``; the roles of the two laws swapped."""
    if not t_i > t0:
        raise DomainError("t_i = t0: model variance is zero")
    mu_s, var_s = _sample_log_moments(m_i, mg_i)
    if not var_s > 0:
        raise DomainError("zero sample variance")
    mu_m, var_m = _model_log_moments(mle, t_i)
    return kl_gaussian(mu_m, var_m, mu_s, var_s)


@dataclass
class DraSeries:
    times: np.ndarray
    values: np.ndarray
    skipped: list = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def median(self) -> float:
        return float(np.median(self.values))

    def pairs(self):
        return list(zip(self.times.tolist(), self.values.tolist()))


def dra_series(sps: SamplePathSet, mle: MleResult,
               reference: tuple[ProcessParams, InitialLaw] | None = None) -> DraSeries:
    """Resistor-average distance between reference and fitted laws at each instant.

    By default the reference is the sample law read off the cross-sectional
    arithmetic and geometric means. Passing ``(params, init)`` of the
    generating process compares the fitted model with the theoretical one.
    Instants with zero variance on either side are skipped and listed.
    """
    times, m, mg = cross_sectional_means(sps)
    t0 = sps.t0
    out_t, out_v, skipped = [], [], []
    if not mle.xi_hat.sigma2 > 0:
        raise DomainError("fitted sigma^2 must be positive")
    for t, mi, gi in zip(times, m, mg):
        if not t > t0:
            skipped.append((float(t), "t = t0"))
            continue
        if reference is None:
            mu_r, var_r = _sample_log_moments(mi, gi)
        else:
            eps, cov = fdd_params(reference[0], reference[1], t0, [t])
            mu_r, var_r = float(eps[0]), float(cov[0, 0])
        if not var_r > 0:
            skipped.append((float(t), "zero reference variance"))
            continue
        mu_m, var_m = _model_log_moments(mle, t)
        fwd = kl_gaussian(mu_r, var_r, mu_m, var_m)
        bwd = kl_gaussian(mu_m, var_m, mu_r, var_r)
        out_t.append(float(t))
        out_v.append(resistor_average(max(fwd, 0.0), max(bwd, 0.0)))
    if skipped:
        log.debug("dra_series skipped %d instants: %s", len(skipped), skipped)
    if not out_t:
        raise DomainError("no usable time points")
    return DraSeries(np.array(out_t), np.array(out_v), skipped)


@dataclass
class DegreeReport:
    degree: int
    mle: MleResult
    rae: float
    aic: float
    bic: float
    dra: DraSeries | None
    inflections: InflectionSet

    @property
    def dra_mean(self) -> float:
        return self.dra.mean if self.dra is not None else math.nan

    @property
    def dra_median(self) -> float:
        return self.dra.median if self.dra is not None else math.nan

    @property
    def dra_series(self):
        return self.dra.pairs() if self.dra is not None else []

    def criterion(self, name: str) -> float:
        return float(getattr(self, name))


@dataclass
class SelectionResult:
    reports: list
    chosen_degree: int
    criterion: str
    stop_reason: str

    @property
    def chosen(self) -> DegreeReport:
        return self.report(self.chosen_degree)

    def report(self, degree: int) -> DegreeReport:
        for r in self.reports:
            if r.degree == degree:
                return r
        raise KeyError(degree)


def _nested_guess(prev: MleResult, p: int) -> ProcessParams:
    """Lower-degree estimate padded with zero coefficients up to degree ``p``."""
    xi = prev.xi_hat
    beta = np.concatenate((xi.curve.beta, np.zeros(p - prev.degree)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ProcessParams(CurveParams.from_beta(xi.alpha, beta, validate=False), xi.sigma2)


def fit_with_warm_start(sps: SamplePathSet, p: int, opts: SolverOptions | None = None,
                        warm: MleResult | None = None) -> MleResult:
    """:func:`fit` from the default guess and, if given, from a nested lower-degree fit.

    The degree-``p`` model contains every lower degree, so starting from the
    padded lower-degree estimate keeps the likelihood from dropping as the
    degree grows. The converged candidate with the larger likelihood wins.
    """
    if warm is None or not warm.converged or warm.degree >= p:
        return fit(sps, p, opts)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        base = fit(sps, p, opts)
        nested = fit(sps, p, opts, guess=_nested_guess(warm, p))
    score = lambda r: (r.converged, r.loglik)  # noqa: E731
    res = nested if score(nested) > score(base) else base
    for msg in res.messages:
        warnings.warn(f"degree {p}: {msg}", RuntimeWarning, stacklevel=2)
    return res


def evaluate_degree(sps: SamplePathSet, p: int, opts: SolverOptions | None = None,
                    warm: MleResult | None = None) -> DegreeReport:
    """Fit degree ``p`` and compute every goodness-of-fit measure.

    ``warm`` is an optional lower-degree fit used as an extra starting point.
    """
    res = fit_with_warm_start(sps, p, opts, warm)
    aic, bic = aic_bic(res)
    try:
        dra = dra_series(sps, res)
    except DomainError as exc:
        log.info("degree %d: no distance series (%s)", p, exc)
        dra = None
    times = sps.times[0]
    try:
        infl = find_inflections(res.xi_hat.curve, float(times[0]), float(times[-1]))
    except ArithmeticError:
        infl = InflectionSet((), ())
    return DegreeReport(p, res, rae(sps, res), aic, bic, dra, infl)


def _usable(rep: DegreeReport, criterion: str) -> bool:
    return rep.mle.converged and math.isfinite(rep.criterion(criterion))


def forward_select(sps: SamplePathSet, p_min: int = 2, p_max: int = 5, criterion: str = "aic",
                   opts: SolverOptions | None = None) -> SelectionResult:
    """Forward search over degrees ``p_min..p_max``.

    A degree improves when its criterion is strictly lower than the best so
    far; non-converged fits never improve. After the first non-improving
    degree exactly one more degree is fitted, then the search stops. The
    chosen degree is the best converged one among all fitted.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")
    if not 2 <= p_min <= p_max:
        raise ValueError("need 2 <= p_min <= p_max")
    reports = []
    best = None
    extra_left = None
    stop_reason = f"reached p_max={p_max}"
    for p in range(p_min, p_max + 1):
        try:
            rep = evaluate_degree(sps, p, opts, warm=reports[-1].mle if reports else None)
        except FitError as exc:
            log.warning("degree %d could not be fitted: %s", p, exc)
            stop_reason = f"degree {p} could not be fitted: {exc}"
            break
        reports.append(rep)
        improved = _usable(rep, criterion) and (
            best is None or rep.criterion(criterion) < best.criterion(criterion))
        if improved:
            best = rep
        if extra_left is not None:
            stop_reason = (f"degree {p - 1} did not improve {criterion}; "
                           f"degree {p} fitted as the parity check")
            break
        if not improved:
            extra_left = 1
    if best is None:
        best = reports[0]
        stop_reason += "; no converged fit, falling back to the lowest degree"
    return SelectionResult(reports, best.degree, criterion, stop_reason)


class Smoother:
    """Smoothed sample mean with first and second derivatives."""

    def __init__(self, times, values, method="natural_cubic_spline", bandwidth=0.15):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.size < 4:
            raise DomainError("smoothing needs at least 4 points")
        self.times, self.values, self.method = times, values, method
        if method == "natural_cubic_spline":
            self._spline = CubicSpline(times, values, bc_type="natural")
        elif method == "local_poly":
            self.h = bandwidth * (times[-1] - times[0])
        else:
            raise ValueError(f"unknown smoothing method {method!r}")

    @property
    def span(self):
        return float(self.times[0]), float(self.times[-1])

    def __call__(self, t, nu: int = 0):
        if self.method == "natural_cubic_spline":
            out = self._spline(t, nu)
        else:
            out = self._local_poly(np.atleast_1d(np.asarray(t, dtype=float)), nu)
            out = out if np.ndim(t) else out[0]
        return out if np.ndim(out) else float(out)

    def _local_poly(self, t, nu):
        # tricube-weighted local quadratic centred at each evaluation point
        u = (self.times[None, :] - t[:, None])
        w = np.clip(1 - np.abs(u / self.h) ** 3, 0, None) ** 3
        mom = np.stack([np.sum(w * u ** k, axis=1) for k in range(5)], axis=1)
        rhs = np.stack([np.sum(w * u ** k * self.values, axis=1) for k in range(3)], axis=1)
        A = np.stack([mom[:, 0:3], mom[:, 1:4], mom[:, 2:5]], axis=1)
        coef = np.linalg.solve(A, rhs[..., None])[..., 0]
        return coef[:, nu] * math.factorial(nu)


def smooth_sample_mean(times, m, method: str = "natural_cubic_spline", bandwidth: float = 0.15) -> Smoother:
    return Smoother(times, m, method, bandwidth)


def sample_inflections(times, m, method: str = "local_poly", grid_n: int | None = None,
                       bandwidth: float = 0.15, trim: float = 0.0) -> InflectionSet:
    """Sign changes of the second derivative of the smoothed sample mean.

    ``trim`` excludes that fraction of the time span at each end, where a
    flat sample mean lets noise flip the sign of the second derivative.
    """
    if not 0 <= trim < 0.5:
        raise ValueError("trim must lie in [0, 0.5)")
    sm = smooth_sample_mean(times, m, method, bandwidth)
    lo, hi = sm.span
    lo, hi = lo + trim * (hi - lo), hi - trim * (hi - lo)
    grid_n = default_grid_n(lo, hi) if grid_n is None else grid_n
    roots = locate_sign_changes(lambda t: sm(t, 2), lo, hi, grid_n)
    # the natural spline pins m'' = 0 at the end knots; such zeros are not inflections
    roots = [r for r in roots if r - lo > 1e-6 and hi - r > 1e-6]
    return InflectionSet(tuple(float(r) for r in roots), tuple(float(sm(r, 2)) for r in roots))

"""
Maximum-likelihood estimation from discretely sampled paths.

Observations are mapped to ``v0_i = x_i1`` and normalised log-increments
``v_ij = ln(x_{i,j+1} / x_ij) / sqrt(Delta_ij)``. The increments are then
independent Gaussians with mean ``m_ij / sqrt(Delta_ij)`` and variance
``sigma^2``, where ``m_ij = -alpha phi0_ij - sigma^2 Delta_ij / 2``, so the
log-likelihood depends on ``(alpha, beta, sigma^2)`` only through a handful of
sums (``Z1, Z2, Z3, X_l, Y_l, W_l``). The stationarity conditions form a
``p + 2`` dimensional nonlinear system solved by damped Newton-Raphson with
an analytic Jacobian.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import optimize

from .diffusion import ProcessParams, SamplePathSet, cross_sectional_means
from .polycurve import CurveParams, DomainError, Polynomial, poly_eval

log = logging.getLogger(__name__)


class FitError(RuntimeError):
    """Raised when a fit cannot even be started (e.g. no usable data)."""


@dataclass(frozen=True)
class VTransform:
    """Change of variables applied to a :class:`SamplePathSet`.

    ``v1[i][j]`` is the normalised log-increment between observations ``j``
    and ``j + 1`` of path ``i`` and ``deltas[i][j]`` the matching time step.
    """

    v0: np.ndarray
    v1: tuple
    deltas: tuple
    times: tuple

    @property
    def d(self) -> int:
        return len(self.v0)

    @property
    def n(self) -> int:
        return int(sum(len(v) for v in self.v1))

    @property
    def t0(self) -> float:
        return float(self.times[0][0])

    # flattened views over all transitions
    @property
    def v_flat(self):
        return np.concatenate(self.v1)

    @property
    def delta_flat(self):
        return np.concatenate(self.deltas)

    @property
    def t_lo(self):
        return np.concatenate([t[:-1] for t in self.times])

    @property
    def t_hi(self):
        return np.concatenate([t[1:] for t in self.times])

    @property
    def t_first(self):
        return np.array([t[0] for t in self.times])

    @property
    def t_last(self):
        return np.array([t[-1] for t in self.times])


@dataclass(frozen=True)
class SummaryStats:
    z1: float
    z2: float
    z3: float
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 1000
    tol: float = 1e-10
    step_tol: float = 1e-12
    max_halvings: int = 30
    max_restarts: int = 5
    restart_noise: float = 0.01
    restart_seed: int = 0


@dataclass
class MleResult:
    """Outcome of :func:`fit`.

    ``residual_norm`` is ``max |score_residuals|`` at ``xi_hat`` in original
    time units.
    """

    degree: int
    xi_hat: ProcessParams
    eta_hat: tuple
    loglik: float
    iterations: int
    converged: bool
    residual_norm: float
    initial_guess: ProcessParams
    n_transitions: int
    d: int
    t0: float
    restarts: int = 0
    messages: list = field(default_factory=list)

    @property
    def degenerate_start(self) -> bool:
        return self.eta_hat[1] == 0.0

    @property
    def x0_expectation(self) -> float:
        """Estimated ``E[X(t0)] = exp(mu1 + sigma1^2 / 2)``."""
        return math.exp(self.eta_hat[0] + 0.5 * self.eta_hat[1])

    def fitted_mean(self, t):
        """Estimated mean function ``E[X(t)]``."""
        q = self.xi_hat.curve.q
        t = np.asarray(t, dtype=float)
        out = self.x0_expectation * np.exp(
            -self.xi_hat.alpha * (np.exp(-poly_eval(q, t)) - math.exp(-poly_eval(q, self.t0))))
        return out if out.ndim else float(out)


def v_transform(sps: SamplePathSet) -> VTransform:
    v1, deltas = [], []
    for i, (t, x) in enumerate(zip(sps.times, sps.values)):
        if t.size < 2:
            raise DomainError(f"path {i + 1} has fewer than two observations")
        if np.any(~(x > 0)):
            raise DomainError(f"path {i + 1} has nonpositive values")
        dl = np.diff(t)
        deltas.append(dl)
        v1.append(np.diff(np.log(x)) / np.sqrt(dl))
    v0 = np.array([x[0] for x in sps.values])
    return VTransform(v0, tuple(v1), tuple(deltas), tuple(sps.times))


def estimate_initial_law(vt: VTransform):
    """ML estimates ``(mu1, sigma1^2)`` of the lognormal law of ``X(t0)``."""
    v0 = np.asarray(vt.v0, dtype=float)
    if np.all(v0 == v0[0]):
        return math.log(v0[0]), 0.0
    lv = np.log(v0)
    mu = float(lv.mean())
    return mu, float(np.mean((lv - mu) ** 2))


def phi(beta: Polynomial, l: int, t_hi, t_lo):
    """``t_hi^l exp(-Q(t_hi)) - t_lo^l exp(-Q(t_lo))``."""
    t_hi = np.asarray(t_hi, dtype=float)
    t_lo = np.asarray(t_lo, dtype=float)
    out = t_hi ** l * np.exp(-poly_eval(beta, t_hi)) - t_lo ** l * np.exp(-poly_eval(beta, t_lo))
    return out if np.ndim(out) else float(out)


def _phi_rows(q: Polynomial, t_hi, t_lo, lmax):
    """Array of ``phi^l`` for ``l = 0..lmax`` (rows) over paired instants."""
    with np.errstate(over="ignore", invalid="ignore"):
        e_hi = np.exp(-poly_eval(q, t_hi))
        e_lo = np.exp(-poly_eval(q, t_lo))
        powers = np.arange(lmax + 1)[:, None]
        return t_hi ** powers * e_hi - t_lo ** powers * e_lo


class _Moments:
    """Sums over transitions needed by the score system and its Jacobian."""

    def __init__(self, vt: VTransform, q: Polynomial, lmax: int):
        v = vt.v_flat
        dl = vt.delta_flat
        ph = _phi_rows(q, vt.t_hi, vt.t_lo, lmax)
        ends = _phi_rows(q, vt.t_last, vt.t_first, lmax)
        self.n = vt.n
        self.z1 = float(np.dot(v, v))
        self.z2 = float(np.dot(v, np.sqrt(dl)))
        self.z3 = float(np.sum(vt.t_last - vt.t_first))
        with np.errstate(over="ignore", invalid="ignore"):
            self.x = ph @ (v / np.sqrt(dl))
            self.ymat = (ph / dl) @ ph.T
            self.w = ends.sum(axis=1)


def summary_stats(vt: VTransform, beta: Polynomial, p: int | None = None) -> SummaryStats:
    """``Z1, Z2, Z3`` and ``X_l, Y_l, W_l`` for ``l = 0..p``."""
    p = beta.degree if p is None else p
    mo = _Moments(vt, beta, p)
    return SummaryStats(mo.z1, mo.z2, mo.z3, mo.x.copy(), mo.ymat[0].copy(), mo.w.copy())


def loglik(vt: VTransform, eta, pp: ProcessParams) -> float:
    """Log-likelihood of the transformed sample.

    With ``eta[1] == 0`` (degenerate start) the initial-law block is left out.
    """
    sigma2 = pp.sigma2
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    mu1, s1 = eta
    mo = _Moments(vt, pp.q, 0)
    a = pp.alpha
    y0 = mo.ymat[0, 0]
    big_phi = a * a * y0 + sigma2 ** 2 * mo.z3 / 4 + a * sigma2 * mo.w[0]
    big_gamma = -a * mo.x[0] - sigma2 * mo.z2 / 2
    n = mo.n
    ll = -0.5 * n * math.log(2 * math.pi) - 0.5 * n * math.log(sigma2) \
        - (mo.z1 + big_phi - 2 * big_gamma) / (2 * sigma2)
    if s1 > 0:
        d = vt.d
        lv = np.log(vt.v0)
        ll += (-0.5 * d * math.log(2 * math.pi) - 0.5 * d * math.log(s1) - lv.sum()
               - np.sum((lv - mu1) ** 2) / (2 * s1))
    return float(ll)


def _residuals(mo: _Moments, alpha, sigma2, p):
    l = np.arange(p + 1)
    r = np.empty(p + 2)
    r[:p + 1] = mo.x[l] + alpha * mo.ymat[0, l] + 0.5 * sigma2 * mo.w[l]
    r[p + 1] = (sigma2 * (mo.n + sigma2 * mo.z3 / 4)
                - alpha * (2 * mo.x[0] + alpha * mo.ymat[0, 0]) - mo.z1)
    return r


def _jacobian(mo: _Moments, alpha, sigma2, p):
    jac = np.empty((p + 2, p + 2))
    ym = mo.ymat
    for l in range(p + 1):
        jac[l, 0] = ym[0, l]
        for r in range(1, p + 1):
            jac[l, r] = (-mo.x[l + r] - alpha * (ym[r, l] + ym[0, l + r])
                         - 0.5 * sigma2 * mo.w[l + r])
        jac[l, p + 1] = 0.5 * mo.w[l]
    jac[p + 1, 0] = -2 * mo.x[0] - 2 * alpha * ym[0, 0]
    for r in range(1, p + 1):
        jac[p + 1, r] = 2 * alpha * (mo.x[r] + alpha * ym[0, r])
    jac[p + 1, p + 1] = mo.n + sigma2 * mo.z3 / 2
    return jac


def score_residuals(vt: VTransform, pp: ProcessParams) -> np.ndarray:
    """The ``p + 2`` likelihood equations evaluated at ``pp``.

    Entries ``0..p`` are ``X_l + alpha Y_l + sigma^2 W_l / 2``; the last is
    ``sigma^2 (n + sigma^2 Z3 / 4) - alpha (2 X_0 + alpha Y_0) - Z1``. They
    relate to the gradient of :func:`loglik` by ``dL/dalpha = -r_0 / sigma^2``,
    ``dL/dbeta_l = alpha r_l / sigma^2`` and
    ``dL/dsigma^2 = -r_{p+1} / (2 sigma^4)``.
    """
    p = pp.curve.degree
    mo = _Moments(vt, pp.q, 2 * p)
    return _residuals(mo, pp.alpha, pp.sigma2, p)


def score_jacobian(vt: VTransform, pp: ProcessParams) -> np.ndarray:
    """Jacobian of :func:`score_residuals` w.r.t. ``(alpha, beta_1..beta_p, sigma^2)``."""
    p = pp.curve.degree
    mo = _Moments(vt, pp.q, 2 * p)
    return _jacobian(mo, pp.alpha, pp.sigma2, p)


def _loglik_gradient_hessian(mo: _Moments, alpha, sigma2, p):
    """Gradient and Hessian of the transition part of the log-likelihood.

    Both follow from the score residuals ``r`` and their Jacobian ``J`` via
    ``grad = D r`` with ``D = diag(-1/sigma^2, alpha/sigma^2, ..., -1/(2 sigma^4))``.
    """
    r = _residuals(mo, alpha, sigma2, p)
    jac = _jacobian(mo, alpha, sigma2, p)
    s2 = sigma2
    dinv = np.concatenate(([-1 / s2], np.full(p, alpha / s2), [-0.5 / s2 ** 2]))
    grad = dinv * r
    hess = dinv[:, None] * jac
    hess[1:p + 1, 0] += r[1:p + 1] / s2
    hess[0, p + 1] += r[0] / s2 ** 2
    hess[1:p + 1, p + 1] -= alpha * r[1:p + 1] / s2 ** 2
    hess[p + 1, p + 1] += r[p + 1] / s2 ** 3
    return grad, hess


def _params(alpha, beta, sigma2):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ProcessParams(CurveParams.from_beta(alpha, beta, validate=False), sigma2)


def _shared_instants(sps: SamplePathSet) -> SamplePathSet:
    """Restrict every path to the instants observed on all paths."""
    common = sps.times[0]
    for t in sps.times[1:]:
        common = np.intersect1d(common, t)
    if common.size < 4:
        raise FitError("paths share fewer than 4 instants; pass an explicit guess")
    keep = [np.isin(t, common) for t in sps.times]
    return SamplePathSet(tuple(t[k] for t, k in zip(sps.times, keep)),
                         tuple(x[k] for x, k in zip(sps.values, keep)))


def initial_guess(sps: SamplePathSet, p: int) -> ProcessParams:
    """Starting point for Newton-Raphson, built from cross-sectional means.

    ``ln ln(k / m_i)`` is regressed on a degree-``p`` polynomial in ``t_i``
    with ``k`` taken as the last sample mean (points with ``m_i >= k`` are
    dropped); intercept and slopes give ``ln alpha`` and ``-beta``.
    ``sigma^2`` is the zero-intercept slope of ``2 ln(m_i / m^g_i)`` on
    ``t_i - t0``. Paths on different grids are reduced to their shared
    instants first.
    """
    if p < 1:
        raise DomainError("degree must be >= 1")
    if not sps.has_common_grid:
        sps = _shared_instants(sps)
    times, m, mg = cross_sectional_means(sps)
    k = m[-1]
    keep = m < k * (1 - 1e-9)
    if keep.sum() < p + 2:
        raise FitError(f"only {int(keep.sum())} usable points for a degree-{p} regression")
    y = np.log(np.log(k / m[keep]))
    coef = npoly.polyfit(times[keep], y, p)
    alpha0 = math.exp(coef[0])
    beta0 = -coef[1:]

    tau = times - sps.t0
    s2_i = 2 * np.log(m / mg)
    pos = tau > 0
    slope = float(np.dot(s2_i[pos], tau[pos]) / np.dot(tau[pos], tau[pos])) if pos.any() else 0.0
    # below the floor the slope is rounding noise (e.g. identical paths)
    if not slope > 1e-8:
        fallback = float(np.mean(s2_i[pos]) / np.mean(tau[pos])) if pos.any() else 0.0
        slope = max(fallback, 1e-8)
        warnings.warn(f"degenerate sigma^2 regression slope; using {slope:g}", RuntimeWarning,
                      stacklevel=2)
    return _params(alpha0, beta0, slope)


def _pow2_scale(times) -> float:
    tmax = max(float(np.max(np.abs(t))) for t in times)
    if tmax <= 0:
        return 1.0
    return 2.0 ** round(math.log2(tmax))


def _to_scaled(x, scale, p):
    # t -> t / scale: beta_l * scale^l, sigma^2 * scale
    y = np.array(x, dtype=float)
    y[1:p + 1] *= scale ** np.arange(1, p + 1)
    y[p + 1] *= scale
    return y


def _from_scaled(y, scale, p):
    x = np.array(y, dtype=float)
    x[1:p + 1] /= scale ** np.arange(1, p + 1)
    x[p + 1] /= scale
    return x


def _newton(vt, x, p, opts):
    """Damped Newton on the score system. Returns ``(x, iters, converged, max|r|, status)``."""

    def evaluate(xv):
        mo = _Moments(vt, Polynomial.from_beta(xv[1:p + 1]), 2 * p)
        return mo, _residuals(mo, xv[0], xv[p + 1], p)

    mo, r = evaluate(x)
    if not np.all(np.isfinite(r)):
        return x, 0, False, math.inf, "non-finite residual at start"
    norm = np.linalg.norm(r)
    for it in range(1, opts.max_iter + 1):
        if np.max(np.abs(r)) < opts.tol:
            return x, it - 1, True, float(np.max(np.abs(r))), "residual"
        jac = _jacobian(mo, x[0], x[p + 1], p)
        if not np.all(np.isfinite(jac)) or np.linalg.cond(jac) > 1e15:
            return x, it - 1, False, float(np.max(np.abs(r))), "singular"
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            return x, it - 1, False, float(np.max(np.abs(r))), "singular"
        if np.linalg.norm(step) < opts.step_tol * max(np.linalg.norm(x), 1e-300):
            x = x + step
            mo, r = evaluate(x)
            return x, it, True, float(np.max(np.abs(r))), "step"
        lam = 1.0
        for _ in range(opts.max_halvings + 1):
            x_new = x + lam * step
            mo_new, r_new = evaluate(x_new)
            if np.all(np.isfinite(r_new)) and np.linalg.norm(r_new) < norm:
                break
            lam *= 0.5
        else:
            # no decrease: accept only if already at the rounding floor
            ok = np.linalg.norm(step) < 1e-8 * max(np.linalg.norm(x), 1e-300)
            return x, it, ok, float(np.max(np.abs(r))), "stalled"
        x, mo, r = x_new, mo_new, r_new
        norm = np.linalg.norm(r)
    return x, opts.max_iter, False, float(np.max(np.abs(r))), "max_iter"


def _transition_loglik(mo: _Moments, alpha, sigma2):
    big_phi = alpha ** 2 * mo.ymat[0, 0] + sigma2 ** 2 * mo.z3 / 4 + alpha * sigma2 * mo.w[0]
    big_gamma = -alpha * mo.x[0] - sigma2 * mo.z2 / 2
    return (-0.5 * mo.n * math.log(2 * math.pi * sigma2)
            - (mo.z1 + big_phi - 2 * big_gamma) / (2 * sigma2))


def _scaled_loglik(vt, x, p):
    if not x[p + 1] > 0:
        return -math.inf
    ll = _transition_loglik(_Moments(vt, Polynomial.from_beta(x[1:p + 1]), 2 * p), x[0], x[p + 1])
    return ll if math.isfinite(ll) else -math.inf


def _ascend(vt, x, p, max_iter=500):
    """Trust-region climb of the log-likelihood in ``(alpha, beta, ln sigma^2)``."""

    def unpack(z):
        return z[0], z[1:p + 1], math.exp(z[p + 1])

    cache = {}

    def terms(z):
        key = z.tobytes()
        if key not in cache:
            alpha, beta, s2 = unpack(z)
            mo = _Moments(vt, Polynomial.from_beta(beta), 2 * p)
            ll = _transition_loglik(mo, alpha, s2)
            grad, hess = _loglik_gradient_hessian(mo, alpha, s2, p)
            # chain rule for sigma^2 = exp(s)
            hess[:, p + 1] *= s2
            hess[p + 1, :] *= s2
            hess[p + 1, p + 1] += grad[p + 1] * s2
            grad[p + 1] *= s2
            if not (np.isfinite(ll) and np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
                ll, grad, hess = -np.inf, np.zeros_like(z), np.eye(z.size)
            cache.clear()
            cache[key] = (-ll, -grad, -hess)
        return cache[key]

    z0 = np.concatenate((x[:p + 1], [math.log(max(x[p + 1], 1e-12))]))
    res = optimize.minimize(lambda z: terms(z)[0], z0, jac=lambda z: terms(z)[1],
                            hess=lambda z: terms(z)[2], method="trust-exact",
                            options={"maxiter": max_iter, "gtol": 1e-10})
    z = res.x
    return np.concatenate((z[:p + 1], [math.exp(z[p + 1])]))


def _polish(vt, x, p, steps=3):
    """A few Newton corrections in original units with an equilibrated solve."""
    best = x
    best_r = np.max(np.abs(score_residuals(vt, _params(x[0], x[1:p + 1], x[p + 1]))))
    for _ in range(steps):
        pp = _params(x[0], x[1:p + 1], x[p + 1])
        r = score_residuals(vt, pp)
        jac = score_jacobian(vt, pp)
        rs = np.abs(jac).max(axis=1)
        cs = np.abs(jac).max(axis=0)
        if not (np.all(rs > 0) and np.all(cs > 0)):
            break
        try:
            step = np.linalg.solve(jac / rs[:, None] / cs[None, :], -r / rs) / cs
        except np.linalg.LinAlgError:
            break
        x = x + step
        if not x[p + 1] > 0:
            break
        r_new = np.max(np.abs(score_residuals(vt, _params(x[0], x[1:p + 1], x[p + 1]))))
        if r_new < best_r:
            best, best_r = x, r_new
    return best


def fit(sps: SamplePathSet, p: int, opts: SolverOptions | None = None,
        guess: ProcessParams | None = None) -> MleResult:
    """Maximum-likelihood fit of a degree-``p`` model.

    Newton-Raphson starts from :func:`initial_guess` (or ``guess``) and runs on
    the time axis rescaled by a power of two close to ``max |t|``, which keeps
    the equations for different ``l`` of comparable size; estimates are mapped
    back to original units and given a short Newton polish there. A singular
    Jacobian triggers up to ``opts.max_restarts`` restarts from a randomly
    perturbed guess. Since Newton may settle on a saddle of the likelihood, a
    trust-region ascent is also run from the guess and finished by Newton;
    the converged candidate with the larger likelihood is returned.
    """
    opts = opts or SolverOptions()
    if p < 1:
        raise DomainError("degree must be >= 1")
    guess = guess or initial_guess(sps, p)
    if guess.curve.degree != p:
        raise ValueError("guess degree does not match p")
    scale = _pow2_scale(sps.times)
    vt = v_transform(sps)
    vt_s = v_transform(SamplePathSet(tuple(t / scale for t in sps.times), sps.values))
    x_guess = np.concatenate(([guess.alpha], guess.curve.beta, [guess.sigma2]))
    rng = np.random.default_rng(opts.restart_seed)

    start = _to_scaled(x_guess, scale, p)
    total_iter, restarts = 0, 0
    best = None
    while True:
        x, iters, ok, rnorm, status = _newton(vt_s, start, p, opts)
        total_iter += iters
        if best is None or (np.isfinite(rnorm) and rnorm < best[1]):
            best = (x, rnorm, ok, status)
        if ok or status != "singular" or restarts >= opts.max_restarts:
            break
        restarts += 1
        start = _to_scaled(x_guess * (1 + opts.restart_noise * rng.standard_normal(x_guess.size)),
                           scale, p)
        log.debug("degree %d: singular Jacobian, restart %d", p, restarts)

    x, rnorm, ok, status = best
    # Newton stops at any stationary point, saddles included. Climbing the
    # likelihood from the same guess ends at a local maximum; Newton then
    # finishes from there and the better converged candidate is kept.
    x_up = _ascend(vt_s, _to_scaled(x_guess, scale, p), p, max_iter=opts.max_iter)
    x2, iters, ok2, rnorm2, status2 = _newton(vt_s, x_up, p, opts)
    total_iter += iters
    if ok2 and (not ok or _scaled_loglik(vt_s, x2, p) > _scaled_loglik(vt_s, x, p)):
        if ok:
            log.debug("degree %d: likelihood ascent found a better stationary point", p)
        x, rnorm, ok, status = x2, rnorm2, ok2, status2
    xo = _from_scaled(x, scale, p)
    if ok:
        xo = _polish(vt, xo, p)
    if np.all(np.isfinite(xo)) and xo[p + 1] > 0:
        rnorm = float(np.max(np.abs(score_residuals(vt, _params(xo[0], xo[1:p + 1], xo[p + 1])))))
    messages = [] if ok else [f"not converged ({status})"]
    if not xo[0] > 0:
        messages.append(f"estimated alpha={xo[0]:.6g} is not positive")
    if not xo[p] > 0:
        messages.append(f"estimated leading coefficient {xo[p]:.6g} is not positive")
    sigma2 = xo[p + 1]
    if not sigma2 > 0:
        messages.append(f"estimated sigma^2={sigma2:.6g} is not positive")
    xi = _params(xo[0], xo[1:p + 1], max(sigma2, 0.0))
    for msg in messages:
        warnings.warn(f"degree {p}: {msg}", RuntimeWarning, stacklevel=2)
    eta = estimate_initial_law(vt)
    ll = loglik(vt, eta, xi) if sigma2 > 0 else -math.inf
    if not math.isfinite(ll):
        ok = False
    return MleResult(degree=p, xi_hat=xi, eta_hat=eta, loglik=ll, iterations=total_iter,
                     converged=bool(ok), residual_norm=rnorm, initial_guess=guess,
                     n_transitions=vt.n, d=vt.d, t0=sps.t0, restarts=restarts,
                     messages=messages)

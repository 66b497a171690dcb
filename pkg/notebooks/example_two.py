"""A process whose mean first decreases and then grows to its upper bound.

Run with ``python notebooks/example_two.py``. Besides selecting the degree,
it shows how a shift of the time origin maps fitted parameters back.
"""
import math
import warnings

import numpy as np

from gompertz_msig import (CurveParams, InitialLaw, Polynomial, ProcessParams, conditional_mean,
                           curve_value, find_inflections, fit, forward_select, shift_time_origin,
                           simulate, subsample)

cp = CurveParams.from_beta(math.exp(-0.1), (0.0626, -0.009, 0.0002))
print("theoretical inflection instants:", [round(t, 3) for t in find_inflections(cp, 0.0, 50.0)])

sps = subsample(simulate(ProcessParams(cp, 0.025 ** 2), InitialLaw.degenerate(5.0), 0.0, 0.1, 501, 25, seed=3), 10)
m = np.mean(np.vstack(sps.values), axis=0)
print("sample mean at t=0, 10, 50:", np.round(m[[0, 10, 50]], 3))

# %% degree selection
with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    sel = forward_select(sps, 2, 5, "aic")
for r in sel.reports:
    print(f"p={r.degree}  RAE={r.rae:.4f}  AIC={r.aic:.2f}  dra_mean={r.dra_mean:.2e}")
print("chosen degree:", sel.chosen_degree)
print("fitted inflections:", [round(t, 3) for t in sel.chosen.inflections])

# %% the same data observed from t0 = 10 onwards, refitted with the origin moved to zero
t0 = 10.0
late = type(sps)(tuple(t[t >= t0] for t in sps.times), tuple(x[t >= t0] for t, x in zip(sps.times, sps.values)))
with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    direct = fit(late, 3)
    moved = fit(late.shifted(t0), 3)
back = shift_time_origin(Polynomial.from_beta(moved.xi_hat.curve.beta), moved.xi_hat.alpha, t0)
x0 = float(np.mean([x[0] for x in late.values]))
tt = np.linspace(t0, 50.0, 5)
print("\nconditional mean from the direct fit :", np.round(conditional_mean(direct.xi_hat, x0, t0, tt), 4))
print("conditional mean from the shifted fit:", np.round(curve_value(back, x0, t0, tt), 4))
print("log-likelihoods:", round(direct.loglik, 3), round(moved.loglik, 3))

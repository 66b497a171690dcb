"""Walk through a two-inflection, strictly increasing growth process.

Run with ``python notebooks/example_one.py``. The script simulates 25 paths,
fits polynomial degrees 2 to 5, picks one by AIC and compares theoretical,
sample and fitted inflection instants.
"""
import math
import warnings

import numpy as np

from gompertz_msig import (CurveParams, InitialLaw, ProcessParams, find_inflections, forward_select,
                           sample_inflections, simulate, subsample)

ALPHA = math.exp(-0.1)
BETA = (0.1225, -0.0075, 0.00017)

# %% theoretical curve
cp = CurveParams.from_beta(ALPHA, BETA)
theory = find_inflections(cp, 0.0, 50.0)
print("theoretical inflection instants:", [round(t, 3) for t in theory])

# %% simulate 25 paths on a fine grid and keep every tenth point
for sigma in (0.01, 0.05):
    sps = subsample(simulate(ProcessParams(cp, sigma ** 2), InitialLaw.degenerate(5.0),
                             0.0, 0.1, 501, 25, seed=0), 10)
    print(f"\nsigma={sigma}: {sps.d} paths, {sps.times[0].size} instants each")

    # %% forward selection over degrees
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sel = forward_select(sps, 2, 5, "aic")
    print(f"{'p':>2} {'RAE':>8} {'AIC':>12} {'BIC':>12} {'dra mean':>10} {'alpha':>8}")
    for r in sel.reports:
        print(f"{r.degree:>2} {r.rae:8.4f} {r.aic:12.2f} {r.bic:12.2f} {r.dra_mean:10.2e} {r.mle.xi_hat.alpha:8.4f}")
    print("chosen degree:", sel.chosen_degree, "|", sel.stop_reason)

    # %% inflection instants: sample mean versus fitted model
    best = sel.chosen
    m = np.mean(np.vstack(sps.values), axis=0)
    sample = sample_inflections(sps.times[0], m, method="local_poly", trim=0.05)
    print("sample inflections:", [round(t, 3) for t in sample])
    print("fitted inflections:", [round(t, 3) for t in best.inflections])
    xi = best.mle.xi_hat
    print("estimates: alpha=%.4f beta=%s sigma=%.5f" % (xi.alpha, np.round(xi.curve.beta, 6), xi.sigma))

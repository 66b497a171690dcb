"""Paths CSV and report JSON formats."""
from __future__ import annotations

import csv
import io
import json
import math
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .diffusion import GAUSSIAN_METHOD, RNG_NAME, STREAM_RULE, SamplePathSet
from .mle import MleResult
from .selection import DegreeReport, SelectionResult

PATHS_HEADER = ["path", "t", "x"]


class InputError(ValueError):
    """Malformed user input (file contents or configuration)."""


def format_paths(sps: SamplePathSet) -> str:
    buf = io.StringIO()
    buf.write(",".join(PATHS_HEADER) + "\n")
    for i, (t, x) in enumerate(zip(sps.times, sps.values), start=1):
        for tj, xj in zip(t.tolist(), x.tolist()):
            buf.write(f"{i},{tj!r},{xj!r}\n")
    return buf.getvalue()


def write_paths(sps: SamplePathSet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_paths(sps))


def parse_paths(text: str) -> SamplePathSet:
    """Parse and validate a paths CSV; errors name the offending line."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("empty paths file") from None
    if [h.strip() for h in header] != PATHS_HEADER:
        raise InputError(f"line 1: expected header {','.join(PATHS_HEADER)!r}, got {','.join(header)!r}")
    paths: dict[int, tuple[list, list]] = {}
    order: list[int] = []
    last_key = None
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise InputError(f"line {lineno}: expected 3 fields, got {len(row)}")
        try:
            pid = int(row[0])
            t = float(row[1])
            x = float(row[2])
        except ValueError:
            raise InputError(f"line {lineno}: cannot parse {row!r}") from None
        if pid < 1:
            raise InputError(f"line {lineno}: path id must be a positive integer")
        if not (math.isfinite(t) and math.isfinite(x)):
            raise InputError(f"line {lineno}: non-finite value")
        if not x > 0:
            raise InputError(f"line {lineno}: x must be positive, got {x!r}")
        key = (pid, t)
        if last_key is not None:
            if key == last_key:
                raise InputError(f"line {lineno}: duplicate (path, t) = ({pid}, {t!r})")
            if key < last_key:
                raise InputError(f"line {lineno}: rows must be sorted by (path, t)")
        last_key = key
        if pid not in paths:
            if paths and t != paths[order[0]][0][0]:
                raise InputError(f"line {lineno}: path {pid} starts at t={t!r}, "
                                 f"other paths start at {paths[order[0]][0][0]!r}")
            paths[pid] = ([], [])
            order.append(pid)
        paths[pid][0].append(t)
        paths[pid][1].append(x)
    if not paths:
        raise InputError("paths file has no data rows")
    return SamplePathSet(tuple(np.array(paths[p][0]) for p in order),
                         tuple(np.array(paths[p][1]) for p in order))


def read_paths(path) -> SamplePathSet:
    with open(path, encoding="utf-8") as fh:
        return parse_paths(fh.read())


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _params_record(pp):
    return {"alpha": _num(pp.alpha), "beta": [_num(b) for b in pp.curve.beta],
            "sigma2": _num(pp.sigma2), "sigma": _num(math.sqrt(pp.sigma2))}


def mle_record(res: MleResult) -> dict:
    return {
        "degree": res.degree,
        "initial_guess": _params_record(res.initial_guess),
        "estimates": _params_record(res.xi_hat),
        "eta": {"mu1": _num(res.eta_hat[0]), "sigma1_sq": _num(res.eta_hat[1])},
        "loglik": _num(res.loglik),
        "converged": res.converged,
        "iterations": res.iterations,
        "restarts": res.restarts,
        "residual_norm": _num(res.residual_norm),
        "messages": list(res.messages),
        "n_transitions": res.n_transitions,
        "d": res.d,
        "t0": res.t0,
    }


def degree_record(rep: DegreeReport) -> dict:
    rec = mle_record(rep.mle)
    rec.update({
        "rae": _num(rep.rae), "aic": _num(rep.aic), "bic": _num(rep.bic),
        "dra_mean": _num(rep.dra_mean), "dra_median": _num(rep.dra_median),
        "dra_series": [[_num(t), _num(v)] for t, v in rep.dra_series],
        "inflections": [_num(t) for t in rep.inflections.instants],
    })
    return rec


def metadata(command: str, seed=None, **extra) -> dict:
    meta = {
        "package": "gompertz_msig",
        "version": __version__,
        "command": command,
        "created": datetime.now(timezone.utc).isoformat(),
        "seed": seed,
        "rng": RNG_NAME,
        "gaussian_method": GAUSSIAN_METHOD,
        "stream_rule": STREAM_RULE,
    }
    meta.update(extra)
    return meta


def selection_record(sel: SelectionResult) -> dict:
    return {"chosen_degree": sel.chosen_degree, "criterion": sel.criterion,
            "stop_reason": sel.stop_reason}


def dump_json(doc, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")


def load_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"report is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("degrees"), list) or not doc["degrees"]:
        raise InputError("report has no 'degrees' list")
    return doc


def fitted_mean_from_record(rec: dict, t):
    """Fitted mean function ``E_hat[X(t)]`` rebuilt from a report entry."""
    est = rec["estimates"]
    eta = rec["eta"]
    beta = np.asarray(est["beta"], dtype=float)
    t = np.asarray(t, dtype=float)
    t0 = float(rec["t0"])

    def q(s):
        return sum(b * s ** (l + 1) for l, b in enumerate(beta))

    ex0 = math.exp(eta["mu1"] + 0.5 * eta["sigma1_sq"])
    return ex0 * np.exp(-est["alpha"] * (np.exp(-q(t)) - math.exp(-q(t0))))

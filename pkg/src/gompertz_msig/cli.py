"""Command-line interface: ``gompertz-msig <command> ...``.

Exit codes: 0 success (statistical non-convergence is reported inside the
output), 2 input error, 3 output I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import jsonschema

from . import __version__
from .diffusion import InitialLaw, ProcessParams, cross_sectional_means, simulate, subsample
from .fileio import (InputError, degree_record, dump_json, fitted_mean_from_record, load_report,
                     metadata, read_paths, selection_record, write_paths)
from .mle import FitError, SolverOptions, fit
from .polycurve import CurveParams, DomainError, InflectionSet, find_inflections
from .selection import (CRITERIA, DegreeReport, aic_bic, evaluate_degree, forward_select,
                        sample_inflections)

log = logging.getLogger("gompertz_msig")

EXIT_OK, EXIT_INPUT, EXIT_IO = 0, 2, 3

_NUM = {"type": "number"}
_SOLVER = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "max_iter": {"type": "integer", "minimum": 1},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "step_tol": {"type": "number", "exclusiveMinimum": 0},
        "max_halvings": {"type": "integer", "minimum": 0},
        "max_restarts": {"type": "integer", "minimum": 0},
        "restart_noise": {"type": "number", "minimum": 0},
        "restart_seed": {"type": "integer", "minimum": 0},
    },
}

SCHEMAS = {
    "simulate": {
        "type": "object",
        "additionalProperties": False,
        "required": ["alpha", "beta", "sigma", "dt", "n_points", "n_paths", "init"],
        "properties": {
            "alpha": {"type": "number", "exclusiveMinimum": 0},
            "beta": {"type": "array", "items": _NUM, "minItems": 1},
            "sigma": {"type": "number", "minimum": 0},
            "t0": _NUM,
            "dt": {"type": "number", "exclusiveMinimum": 0},
            "n_points": {"type": "integer", "minimum": 2},
            "n_paths": {"type": "integer", "minimum": 1},
            "seed": {"type": "integer", "minimum": 0},
            "subsample_step": {"type": "integer", "minimum": 1},
            "init": {
                "oneOf": [
                    {"type": "object", "additionalProperties": False,
                     "required": ["kind", "x0"],
                     "properties": {"kind": {"const": "degenerate"},
                                    "x0": {"type": "number", "exclusiveMinimum": 0}}},
                    {"type": "object", "additionalProperties": False,
                     "required": ["kind", "mu1", "sigma1_sq"],
                     "properties": {"kind": {"const": "lognormal"}, "mu1": _NUM,
                                    "sigma1_sq": {"type": "number", "minimum": 0}}},
                ]
            },
        },
    },
    "estimate": {
        "type": "object",
        "additionalProperties": False,
        "properties": {"degree": {"type": "integer", "minimum": 1}, "solver": _SOLVER},
    },
    "select": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "p_min": {"type": "integer", "minimum": 2},
            "p_max": {"type": "integer", "minimum": 2},
            "criterion": {"enum": list(CRITERIA)},
            "solver": _SOLVER,
        },
    },
    "inflections": {
        "type": "object",
        "additionalProperties": False,
        "required": ["alpha", "beta", "t_lo", "t_hi"],
        "properties": {
            "alpha": {"type": "number", "exclusiveMinimum": 0},
            "beta": {"type": "array", "items": _NUM, "minItems": 1},
            "t_lo": _NUM,
            "t_hi": _NUM,
            "grid_n": {"type": "integer", "minimum": 2},
        },
    },
}


def load_config(path, command: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"config {path} is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"config {path}: {where}: {exc.message}") from None
    return cfg


def _read_paths(path):
    try:
        return read_paths(path)
    except OSError as exc:
        raise InputError(f"cannot read paths file {path}: {exc.strerror}") from None
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def _read_report(path):
    try:
        return load_report(path)
    except OSError as exc:
        raise InputError(f"cannot read report {path}: {exc.strerror}") from None


def _solver(cfg) -> SolverOptions:
    return SolverOptions(**cfg.get("solver", {}))


def _csv_path(out: Path) -> Path:
    return out.with_suffix(".csv") if out.suffix.lower() != ".csv" else out.with_name(out.stem + ".instants.csv")


# commands

def cmd_simulate(args) -> int:
    cfg = load_config(args.config, "simulate")
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise InputError("a seed is required (config 'seed' or --seed)")
    init_cfg = cfg["init"]
    if init_cfg["kind"] == "degenerate":
        init = InitialLaw.degenerate(init_cfg["x0"])
    else:
        init = InitialLaw.lognormal(init_cfg["mu1"], init_cfg["sigma1_sq"])
    try:
        curve = CurveParams.from_beta(cfg["alpha"], cfg["beta"])
    except ValueError as exc:
        raise InputError(f"config {args.config}: {exc}") from None
    pp = ProcessParams(curve, cfg["sigma"] ** 2)
    sps = simulate(pp, init, cfg.get("t0", 0.0), cfg["dt"], cfg["n_points"], cfg["n_paths"], seed)
    step = cfg.get("subsample_step", 1)
    if step > 1:
        try:
            sps = subsample(sps, step)
        except DomainError as exc:
            raise InputError(f"config {args.config}: {exc}") from None
    write_paths(sps, args.out)
    log.info("wrote %d paths x %d points to %s", sps.d, sps.times[0].size, args.out)
    return EXIT_OK


def _estimate_report(sps, p, opts) -> dict:
    if sps.has_common_grid:
        return degree_record(evaluate_degree(sps, p, opts))
    # heterogeneous grids: cross-sectional measures are unavailable
    res = fit(sps, p, opts)
    aic, bic = aic_bic(res)
    t_lo = min(float(t[0]) for t in sps.times)
    t_hi = max(float(t[-1]) for t in sps.times)
    try:
        infl = find_inflections(res.xi_hat.curve, t_lo, t_hi)
    except ArithmeticError:
        infl = InflectionSet((), ())
    return degree_record(DegreeReport(p, res, math.nan, aic, bic, None, infl))


def cmd_estimate(args) -> int:
    cfg = load_config(args.config, "estimate") if args.config else {}
    degree = args.degree if args.degree is not None else cfg.get("degree")
    if degree is None or degree < 1:
        raise InputError("a degree >= 1 is required (--degree or config 'degree')")
    sps = _read_paths(args.paths)
    try:
        rec = _estimate_report(sps, degree, _solver(cfg))
    except FitError as exc:
        raise InputError(str(exc)) from None
    doc = {"metadata": metadata("estimate", source_paths=str(args.paths)), "degrees": [rec]}
    dump_json(doc, args.out)
    log.info("degree %d: converged=%s loglik=%s", degree, rec["converged"], rec["loglik"])
    return EXIT_OK


def cmd_select(args) -> int:
    cfg = load_config(args.config, "select") if args.config else {}
    sps = _read_paths(args.paths)
    if not sps.has_common_grid:
        raise InputError("select requires all paths to share a common grid")
    p_min, p_max = cfg.get("p_min", 2), cfg.get("p_max", 5)
    if p_min > p_max:
        raise InputError("p_min must not exceed p_max")
    sel = forward_select(sps, p_min, p_max, cfg.get("criterion", "aic"), _solver(cfg))
    doc = {
        "metadata": metadata("select", source_paths=str(args.paths)),
        "degrees": [degree_record(r) for r in sel.reports],
        "selection": selection_record(sel),
    }
    dump_json(doc, args.out)
    log.info("chosen degree %d (%s)", sel.chosen_degree, sel.stop_reason)
    return EXIT_OK


def _pick_degree(doc, degree):
    recs = {r["degree"]: r for r in doc["degrees"]}
    if degree is None:
        if "selection" in doc:
            degree = doc["selection"]["chosen_degree"]
        elif len(recs) == 1:
            degree = next(iter(recs))
        else:
            raise InputError("report holds several degrees; pass --degree")
    if degree not in recs:
        raise InputError(f"degree {degree} not present in report")
    return recs[degree]


def cmd_inflections(args) -> int:
    modes = [m for m, on in (("params", args.config is not None),
                             ("fitted", args.report is not None),
                             ("sample", args.sample_mean)) if on]
    if len(modes) != 1:
        raise InputError("choose exactly one source: --config (parameters), "
                         "--paths with --report (fitted), or --paths with --sample-mean")
    mode = modes[0]
    out = {"metadata": metadata("inflections"), "mode": mode}
    if mode == "params":
        cfg = load_config(args.config, "inflections")
        if not cfg["t_lo"] < cfg["t_hi"]:
            raise InputError("t_lo must be below t_hi")
        try:
            curve = CurveParams.from_beta(cfg["alpha"], cfg["beta"])
        except ValueError as exc:
            raise InputError(f"config {args.config}: {exc}") from None
        infl = find_inflections(curve, cfg["t_lo"], cfg["t_hi"], cfg.get("grid_n"))
    else:
        if args.paths is None:
            raise InputError(f"{mode} mode needs --paths")
        sps = _read_paths(args.paths)
        if mode == "fitted":
            rec = _pick_degree(_read_report(args.report), args.degree)
            est = rec["estimates"]
            curve = CurveParams.from_beta(est["alpha"], est["beta"], validate=False)
            t_lo = min(float(t[0]) for t in sps.times)
            t_hi = max(float(t[-1]) for t in sps.times)
            infl = find_inflections(curve, t_lo, t_hi)
            out["degree"] = rec["degree"]
        else:
            if not sps.has_common_grid:
                raise InputError("sample-mean mode requires a common grid")
            times, m, _ = cross_sectional_means(sps)
            infl = sample_inflections(times, m, method=args.method, trim=args.trim)
            out["method"] = args.method
            out["trim"] = args.trim
    out["instants"] = list(infl.instants)
    out["residuals"] = list(infl.residuals)
    outp = Path(args.out)
    dump_json(out, outp)
    with open(_csv_path(outp), "w", encoding="utf-8", newline="") as fh:
        fh.write("index,t\n")
        for k, t in enumerate(infl.instants, start=1):
            fh.write(f"{k},{t!r}\n")
    log.info("%d inflection instant(s): %s", len(infl), list(infl.instants))
    return EXIT_OK


def cmd_mean_curves(args) -> int:
    sps = _read_paths(args.paths)
    doc = _read_report(args.report)
    if not sps.has_common_grid:
        raise InputError("mean-curves requires a common grid")
    times, m, _ = cross_sectional_means(sps)
    recs = sorted(doc["degrees"], key=lambda r: r["degree"])
    cols = [fitted_mean_from_record(r, times) for r in recs]
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "sample_mean"] + [f"fitted_mean_p{r['degree']}" for r in recs])
        for j, t in enumerate(times):
            w.writerow([repr(float(t)), repr(float(m[j]))] + [repr(float(c[j])) for c in cols])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gompertz-msig",
                                 description="Multi-sigmoidal Gompertz diffusion toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate sample paths to a CSV file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="fit one polynomial degree")
    p.add_argument("--paths", required=True)
    p.add_argument("--degree", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("select", help="forward selection of the polynomial degree")
    p.add_argument("--paths", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("inflections", help="inflection instants (JSON plus CSV)")
    p.add_argument("--config", help="curve parameters (params mode)")
    p.add_argument("--paths")
    p.add_argument("--report", help="fitted report (fitted mode)")
    p.add_argument("--sample-mean", action="store_true", help="smoothed sample mean (sample mode)")
    p.add_argument("--method", default="local_poly", choices=["local_poly", "natural_cubic_spline"])
    p.add_argument("--trim", type=float, default=0.0,
                   help="fraction of the time span ignored at each end (sample mode)")
    p.add_argument("--degree", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inflections)

    p = sub.add_parser("mean-curves", help="sample and fitted mean functions as CSV")
    p.add_argument("--paths", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mean_curves)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

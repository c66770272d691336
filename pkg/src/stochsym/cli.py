"""Batch front end: verification suites and reconstruction experiments.

Subcommands
    verify       residual checks for one catalog model/route
    reduce       reduction-specific checks plus the reduced closed form
    reconstruct  direct vs reconstructed Monte Carlo estimates
    all          verify + reconstruct across the whole catalog

Exit codes: 0 all checks passed, 1 a check failed (reports still written),
2 invalid configuration, 3 numeric failure.  Reports are JSON with sorted
keys (or CSV for the Monte Carlo rows) and embed the resolved configuration
and library version; wall-clock times never enter a report, so identical
(config, seed) pairs serialize byte-identically for any thread count.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .catalog import (CatalogEntry, default_parameters, get_model, model_ids,
                      routes_for)
from .checks import (ResidualReport, check_algebra_closure,
                     check_determining_equations, check_quasi_doob,
                     check_reduced_form, check_straightening,
                     check_triangular)
from .errors import ConfigError, DegenerateWeightsWarning, StochsymError
from .kernels import backend_name
from .mc import run_reconstruction

EXIT_PASS = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

CSV_COLUMNS = ["model", "route", "time", "estimator", "value", "stderr",
               "n_effective", "rejected_frac"]


# ---------------------------------------------------------------------------
# check suites
# ---------------------------------------------------------------------------


def _merge_reports(op: str, model: str, tolerance: float,
                   parts: Sequence[ResidualReport]) -> ResidualReport:
    """Fold per-symmetry reports into a single block with a breakdown."""
    report = ResidualReport(
        op=op, model=model, points=max(p.points for p in parts),
        max_residual=max(p.max_residual for p in parts),
        mean_residual=float(np.mean([p.mean_residual for p in parts])),
        tolerance=tolerance,
        breakdown={f"field_{i}": p.max_residual for i, p in enumerate(parts)})
    report.skipped = max(p.skipped for p in parts)
    return report


def _not_applicable(op: str, model: str, tolerance: float) -> ResidualReport:
    report = ResidualReport(op=op, model=model, points=0, max_residual=0.0,
                            mean_residual=0.0, tolerance=tolerance)
    report.extra = {"applicable": False}
    return report


def verify_model(entry: CatalogEntry, points: int = 200, seed: int = 1,
                 tolerance: Optional[float] = None,
                 use_analytic: bool = True) -> List[ResidualReport]:
    """The five verification blocks for one catalog entry.

    determining_equations  every stored symmetry solves its two equations
    quasi_doob             the measure change is the gradient of the stored
                           potential (skipped when the route carries none)
    algebra_closure        pairwise brackets close on the stored span, with
                           fitted constants against the expected ones
    straightening          the reduction sends every symmetry to a strong one
    triangular             the reduced SDE passes the dependency test
    """
    label = f"{entry.model}:{entry.route}"
    pts = entry.sample(points, seed=seed)
    tol_tight = 1e-6 if tolerance is None else tolerance
    tol_fd = 1e-5 if tolerance is None else tolerance

    det = _merge_reports(
        "determining_equations", label, tol_tight,
        [check_determining_equations(v, entry.sde, pts, tolerance=tol_tight,
                                     model=label, use_analytic=use_analytic)
         for v in entry.symmetries])

    if entry.potential is None:
        qd = _not_applicable("quasi_doob", label, tol_tight)
    else:
        qd = check_quasi_doob(entry.reduction.h, entry.potential, entry.sde,
                              pts, tolerance=tol_tight, model=label,
                              use_analytic=use_analytic)

    closure = check_algebra_closure(entry.symmetries, entry.sde, pts,
                                    tolerance=tol_fd, model=label,
                                    use_analytic=use_analytic)
    mismatch = 0.0
    for (i, j), expected in entry.expected_structure.items():
        fitted = None
        for pair in closure.extra.get("pairs", []):
            if pair["i"] == i and pair["j"] == j:
                fitted = np.asarray(pair["constants"])
        if fitted is not None:
            mismatch = max(mismatch, float(np.max(np.abs(
                fitted - np.asarray(expected, dtype=float)))))
    closure.breakdown["structure_match"] = mismatch
    closure.max_residual = max(closure.max_residual, mismatch)
    closure.passed = closure.max_residual <= closure.tolerance

    straight = check_straightening(entry.reduction, entry.symmetries, pts,
                                   potential=entry.potential,
                                   tolerance=tol_fd, model=label,
                                   use_analytic=use_analytic)

    reduced_pts = np.stack([entry.reduction.phi(x) for x in pts])
    tri = check_triangular(entry.reduced_sde_expected, entry.triangular_r,
                           reduced_pts, tolerance=tol_tight, model=label,
                           use_analytic=use_analytic)

    return [det, qd, closure, straight, tri]


def reduce_model(entry: CatalogEntry, points: int = 200, seed: int = 1,
                 tolerance: Optional[float] = None,
                 use_analytic: bool = True) -> List[ResidualReport]:
    """Reduction-only blocks: closed form, straightening, triangularity."""
    label = f"{entry.model}:{entry.route}"
    pts = entry.sample(points, seed=seed)
    tol_tight = 1e-6 if tolerance is None else tolerance
    tol_fd = 1e-5 if tolerance is None else tolerance
    form = check_reduced_form(entry.reduction, entry.sde,
                              entry.reduced_sde_expected, pts,
                              tolerance=tol_tight, model=label)
    straight = check_straightening(entry.reduction, entry.symmetries, pts,
                                   potential=entry.potential,
                                   tolerance=tol_fd, model=label,
                                   use_analytic=use_analytic)
    reduced_pts = np.stack([entry.reduction.phi(x) for x in pts])
    tri = check_triangular(entry.reduced_sde_expected, entry.triangular_r,
                           reduced_pts, tolerance=tol_tight, model=label,
                           use_analytic=use_analytic)
    return [form, straight, tri]


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochsym",
        description="Symmetry verification, reduction and Monte Carlo "
                    "reconstruction for the built-in SDE catalog.")
    parser.add_argument("--version", action="version",
                        version=f"stochsym {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, with_route=True):
        p.add_argument("--model", required=True, help="catalog model id")
        if with_route:
            p.add_argument("--route", default=None,
                           help="reduction route (default: the model's first)")
        p.add_argument("--param", action="append", default=[],
                       metavar="NAME=VALUE", help="model parameter override")
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--out", default=None, help="report file (default stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    pv = sub.add_parser("verify", help="run the residual check suite")
    common(pv)
    pv.add_argument("--points", type=int, default=200)
    pv.add_argument("--tol", type=float, default=None,
                    help="override every block tolerance")
    pv.add_argument("--fd", action="store_true",
                    help="force finite-difference derivatives")

    pr = sub.add_parser("reduce", help="check the reduction and its image")
    common(pr)
    pr.add_argument("--points", type=int, default=200)
    pr.add_argument("--tol", type=float, default=None)
    pr.add_argument("--fd", action="store_true")

    pm = sub.add_parser("reconstruct",
                        help="compare direct and reconstructed estimates")
    common(pm)
    pm.add_argument("--g", default=None, help="observable name")
    pm.add_argument("--t", default="1.0",
                    help="comma-separated output times")
    pm.add_argument("--paths", type=int, default=100000)
    pm.add_argument("--dt", type=float, default=1e-3)
    pm.add_argument("--backend", default=None, choices=("numba", "numpy"))
    pm.add_argument("--threads", type=int, default=None)

    pa = sub.add_parser("all", help="verify + reconstruct the whole catalog")
    pa.add_argument("--models", default=None,
                    help="comma-separated subset of model ids")
    pa.add_argument("--points", type=int, default=200)
    pa.add_argument("--tol", type=float, default=None)
    pa.add_argument("--paths", type=int, default=100000)
    pa.add_argument("--dt", type=float, default=1e-3)
    pa.add_argument("--t", default="1.0")
    pa.add_argument("--seed", type=int, default=1)
    pa.add_argument("--backend", default=None, choices=("numba", "numpy"))
    pa.add_argument("--threads", type=int, default=None)
    pa.add_argument("--out", default=None)
    pa.add_argument("--format", choices=("json", "csv"), default="json")
    return parser


def _parse_params(pairs: Sequence[str]) -> Dict[str, float]:
    out = {}
    for raw in pairs:
        name, eq, value = raw.partition("=")
        if not eq or not name:
            raise ConfigError(f"expected NAME=VALUE, got {raw!r}")
        try:
            out[name] = float(value)
        except ValueError as exc:
            raise ConfigError(f"parameter {name!r} has non-numeric value "
                              f"{value!r}") from exc
    return out


def _parse_times(spec: str) -> List[float]:
    try:
        return [float(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad time list {spec!r}") from exc


def _write_report(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def _json_report(config: Dict[str, object], payload: Dict[str, object]) -> str:
    doc = {"config": config, "version": __version__}
    doc.update(payload)
    return json.dumps(doc, indent=2, sort_keys=True)


def _csv_rows(rows: List[Dict[str, object]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommand drivers
# ---------------------------------------------------------------------------


def _check_suite_command(args, suite) -> int:
    if args.format != "json":
        raise ConfigError(f"{args.subcommand} reports are JSON only")
    params = _parse_params(args.param)
    entry = get_model(args.model, route=args.route, **params)
    reports = suite(entry, points=args.points, seed=args.seed,
                    tolerance=args.tol, use_analytic=not args.fd)
    config = {
        "subcommand": args.subcommand,
        "model": entry.model,
        "route": entry.route,
        "parameters": dict(entry.parameters),
        "points": args.points,
        "seed": args.seed,
        "tolerance": args.tol,
        "finite_differences": bool(args.fd),
    }
    text = _json_report(config, {"reports": [r.to_dict() for r in reports]})
    _write_report(text, args.out)
    ok = all(r.passed for r in reports)
    return EXIT_PASS if ok else EXIT_CHECK_FAILED


def cmd_verify(args) -> int:
    return _check_suite_command(args, verify_model)


def cmd_reduce(args) -> int:
    return _check_suite_command(args, reduce_model)


def cmd_reconstruct(args) -> int:
    params = _parse_params(args.param)
    entry = get_model(args.model, route=args.route, **params)
    times = _parse_times(args.t)
    backend = backend_name(args.backend)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateWeightsWarning)
        result = run_reconstruction(entry, times, args.paths, args.dt,
                                    seed=args.seed, observable=args.g,
                                    backend=backend, threads=args.threads)
    degenerate = any(issubclass(w.category, DegenerateWeightsWarning)
                     for w in caught)
    config = {
        "subcommand": "reconstruct",
        "model": entry.model,
        "route": entry.route,
        "parameters": dict(entry.parameters),
        "observable": result.observable,
        "times": result.times,
        "paths": args.paths,
        "dt": args.dt,
        "seed": args.seed,
        "backend": backend,
    }
    if args.format == "csv":
        text = _csv_rows(result.rows())
    else:
        text = _json_report(config, {
            "result": result.to_dict(),
            "degenerate_weights": degenerate,
        })
    _write_report(text, args.out)
    ok = (not degenerate) and all(abs(c["z_score"]) <= 3.0
                                  for c in result.comparisons)
    return EXIT_PASS if ok else EXIT_CHECK_FAILED


def cmd_all(args) -> int:
    if args.models is None:
        selected = list(model_ids())
    else:
        selected = [tok for tok in args.models.split(",") if tok.strip()]
        unknown = [m for m in selected if m not in model_ids()]
        if unknown:
            raise ConfigError(f"unknown model ids {unknown}")
    if not selected:
        raise ConfigError("empty model selection")
    times = _parse_times(args.t)
    backend = backend_name(args.backend)

    first_failure = EXIT_PASS
    verify_blocks = []
    mc_results = []
    mc_rows = []
    for model in selected:
        for route in routes_for(model):
            entry = get_model(model, route=route)
            reports = verify_model(entry, points=args.points, seed=args.seed,
                                   tolerance=args.tol)
            verify_blocks.extend(r.to_dict() for r in reports)
            if first_failure == EXIT_PASS and not all(r.passed for r in reports):
                first_failure = EXIT_CHECK_FAILED
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", DegenerateWeightsWarning)
                result = run_reconstruction(entry, times, args.paths, args.dt,
                                            seed=args.seed, backend=backend,
                                            threads=args.threads)
            degenerate = any(issubclass(w.category, DegenerateWeightsWarning)
                             for w in caught)
            mc_results.append(result.to_dict())
            mc_rows.extend(result.rows())
            ok = (not degenerate) and all(abs(c["z_score"]) <= 3.0
                                          for c in result.comparisons)
            if first_failure == EXIT_PASS and not ok:
                first_failure = EXIT_CHECK_FAILED

    config = {
        "subcommand": "all",
        "models": selected,
        "points": args.points,
        "tolerance": args.tol,
        "paths": args.paths,
        "dt": args.dt,
        "times": times,
        "seed": args.seed,
        "backend": backend,
    }
    if args.format == "csv":
        text = _csv_rows(mc_rows)
    else:
        text = _json_report(config, {
            "verification": verify_blocks,
            "reconstruction": mc_results,
        })
    _write_report(text, args.out)
    return first_failure


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "verify": cmd_verify,
        "reduce": cmd_reduce,
        "reconstruct": cmd_reconstruct,
        "all": cmd_all,
    }
    try:
        return handlers[args.subcommand](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StochsymError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

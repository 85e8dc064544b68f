"""Command-line front end.

Every command prints a JSON run manifest (full configuration and seed) on
stdout and writes deterministic CSV outputs, so identical invocations give
byte-identical files. ``FRONTDOOR_JOBS`` sets the default worker count and
``FRONTDOOR_GERMAN_CSV`` locates the German Credit CSV for the builtin manifest.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .citest import KINDS, CiMethod
from .data import AuditManifest, DataError, ingest
from .ensemble import VARIANTS, EnsembleParams, run_ensemble, scan_graph
from .experiments import simulate, summarize, write_rows
from .fixtures import NAMED, load_fixture
from .graph import GraphError, Smcm, check_assumptions, parse_smcm
from .manifests import BUILTIN, manifest_path
from .search import (
    AdmissibleSet,
    SearchConfig,
    SearchRoles,
    bootstrap_pvalues,
    estimate_witness,
    run_algorithm1,
    select_witness,
    write_bootstrap_csv,
)

log = logging.getLogger("frontdoor")

ENSEMBLE_COLUMNS = (
    "p", "d", "q", "variant", "n_graphs", "successes_exhaustive",
    "successes_bounded", "redraws", "seed",
)


# fallback CSV location for the builtin German Credit manifest
CSV_ENV = "FRONTDOOR_GERMAN_CSV"


def default_jobs() -> int:
    raw = os.environ.get("FRONTDOOR_JOBS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _emit(manifest: dict) -> None:
    print(json.dumps(_clean(manifest), indent=2, sort_keys=True))


def _clean(obj):
    """JSON-safe copy: NaN becomes null, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if math.isnan(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def load_graph(spec: str) -> Smcm:
    if spec in NAMED:
        return load_fixture(spec)
    path = Path(spec)
    if not path.exists():
        raise GraphError(f"unknown fixture or missing graph file: {spec}")
    return parse_smcm(path.read_text())


def _ci_method(args) -> CiMethod:
    return CiMethod(
        kind=args.ci,
        n_features_xy=args.features_xy,
        n_features_cond=args.features_cond,
        seed=args.ci_seed,
    )


# ensemble --------------------------------------------------------------------

def cmd_ensemble(args) -> int:
    max_size = None if args.max_size < 0 else args.max_size
    rows = []
    for p in args.p:
        for d in args.d:
            for q in args.q:
                params = EnsembleParams(p, d, q, args.variant, max_size, args.seed)
                rows.append(run_ensemble(params, args.n, n_jobs=args.jobs).as_row())
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=ENSEMBLE_COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    _emit({
        "command": "ensemble", "version": __version__,
        "config": {"p": args.p, "d": args.d, "q": args.q, "variant": args.variant,
                   "n_graphs": args.n, "max_size": max_size, "seed": args.seed,
                   "redraw_policy": "graphs without an eligible treatment are redrawn"},
        "outputs": {"csv": args.out},
        "rows": rows,
    })
    return 0


# scan ------------------------------------------------------------------------

def cmd_scan(args) -> int:
    g = load_graph(args.graph)
    if g.roles is None:
        raise GraphError("graph file has no roles (need role t, role y, role b)")
    max_size = None if args.max_size < 0 else args.max_size
    outcome = scan_graph(g, max_size)
    _emit({
        "command": "scan", "version": __version__,
        "config": {"graph": args.graph, "max_size": max_size},
        "success": outcome.success,
        "witness": outcome.witness.names(g) if outcome.success else None,
        "assumption_violations": check_assumptions(g),
    })
    return 0


# simulate --------------------------------------------------------------------

def _search_config(args, max_size_default) -> SearchConfig:
    max_size = max_size_default if args.max_size is None else args.max_size
    return SearchConfig(
        n_r=args.n_r, p_v=args.p_v,
        max_subset_size=None if max_size < 0 else max_size,
        split_fraction=args.split, ci_method=_ci_method(args), seed=args.seed,
    )


def cmd_simulate(args) -> int:
    g = load_graph(args.graph)
    if g.roles is None:
        raise GraphError("graph file has no roles")
    cfg = _search_config(args, 5)
    rows = simulate(
        g, args.n_samples, args.n_runs, cfg, seed=args.seed, root_law=args.root_law,
        run_search=not args.no_search, n_jobs=args.jobs,
    )
    if args.out:
        write_rows(rows, args.out)
    _emit({
        "command": "simulate", "version": __version__,
        "config": {"graph": args.graph, "n_samples": args.n_samples, "n_runs": args.n_runs,
                   "root_law": args.root_law, "seed": args.seed, "search": cfg.as_dict(),
                   "regression": "ridge refit per candidate adjustment set, 5-fold CV"},
        "outputs": {"csv": args.out},
        "summary": summarize(rows),
    })
    return 0


# audit -------------------------------------------------------------------------

def run_audit(table, roles: SearchRoles, cfg: SearchConfig, n_boot: int, top_k: int, n_jobs: int = 1):
    """Search, bootstrap the most frequent witnesses, select one, estimate with it."""
    report = run_algorithm1(table, roles, cfg, n_jobs=n_jobs)
    result = {"report": report, "selected": None, "bootstrap": None, "selected_estimates": None}
    if report.failure:
        return result
    candidates = [AdmissibleSet(*key) for key, _ in report.witness_counts()[:top_k]]
    boots = [bootstrap_pvalues(table, w, roles, n_boot, cfg) for w in candidates]
    chosen = select_witness(candidates, boots)
    result["selected"] = chosen
    result["bootstrap"] = boots[candidates.index(chosen)]
    result["candidates"] = list(zip(candidates, boots))
    result["selected_estimates"] = estimate_witness(table, roles, chosen, cfg)
    return result


def cmd_audit(args) -> int:
    path = manifest_path(args.manifest) if args.manifest in BUILTIN else Path(args.manifest)
    manifest = AuditManifest.load(path)
    if args.csv:
        manifest.csv_path = args.csv
    elif args.manifest in BUILTIN and os.environ.get(CSV_ENV):
        manifest.csv_path = os.environ[CSV_ENV]
    if not Path(manifest.csv_path).exists():
        raise DataError(f"CSV not found: {manifest.csv_path} (pass --csv)")
    if args.children:
        manifest.children = list(args.children)
        manifest.validate()
    ing = ingest(manifest)
    roles = SearchRoles(ing.treatment, ing.outcome, tuple(ing.children))
    cfg = _search_config(args, 3)
    res = run_audit(ing.table, roles, cfg, args.n_boot, args.top_k, args.jobs)
    report = res["report"]
    out_dir = Path(args.out_dir) if args.out_dir else None
    outputs = {}
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        runs_csv = out_dir / "runs.csv"
        with open(runs_csv, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["run", "c2", "ate_z", "ate_s"])
            for r in report.runs:
                writer.writerow([r.index, r.c2, _fmt(r.ate_z), _fmt(r.ate_s)])
        outputs["runs_csv"] = str(runs_csv)
        if res["bootstrap"] is not None:
            boot_csv = out_dir / "bootstrap.csv"
            write_bootstrap_csv(res["bootstrap"], boot_csv)
            outputs["bootstrap_csv"] = str(boot_csv)
    selected = None
    if res["selected"] is not None:
        est = res["selected_estimates"]
        selected = {
            **res["selected"].as_dict(),
            "median_p": res["bootstrap"].medians,
            "ate_z": float(est[:, 0].mean()), "ate_z_std": float(est[:, 0].std()),
            "ate_s": float(est[:, 1].mean()), "ate_s_std": float(est[:, 1].std()),
        }
        for key in ("p_eq4", "p_eq5i", "p_eq5ii"):
            selected.pop(key)
    manifest_out = {
        "command": "audit", "version": __version__,
        "config": {"manifest": manifest.to_dict(), "search": cfg.as_dict(),
                   "n_boot": args.n_boot, "top_k": args.top_k},
        "ingestion": {"rows": ing.table.n_rows, "rows_dropped": ing.rows_dropped,
                      "encoding": ing.table.provenance},
        "result": report.as_dict(),
        "selected": selected,
        "failure": report.failure,
        "outputs": outputs,
    }
    if out_dir:
        (out_dir / "report.json").write_text(json.dumps(_clean(manifest_out), indent=2, sort_keys=True) + "\n")
    _emit(manifest_out)
    return 0


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.10g}"


# parser ------------------------------------------------------------------------

def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-r", type=int, default=100, help="runs, each with its own split")
    p.add_argument("--p-v", type=float, default=0.1, help="p-value threshold")
    p.add_argument("--max-size", type=int, default=None, help="largest |Z| (negative: unbounded)")
    p.add_argument("--split", type=float, default=0.5, help="training share of each split")
    p.add_argument("--ci", choices=KINDS, default="rcot")
    p.add_argument("--features-xy", type=int, default=5)
    p.add_argument("--features-cond", type=int, default=25)
    p.add_argument("--ci-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frontdoor", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--jobs", type=int, default=default_jobs(), help="worker processes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ensemble", help="count scan successes on random graphs")
    p.add_argument("--p", type=int, nargs="+", default=[10])
    p.add_argument("--d", type=float, nargs="+", default=[2.0])
    p.add_argument("--q", type=float, nargs="+", default=[0.0])
    p.add_argument("--variant", choices=VARIANTS, default="no-grandparent")
    p.add_argument("--n", type=int, default=100, help="graphs per cell")
    p.add_argument("--max-size", type=int, default=5, help="bound for the bounded scan (negative: none)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("scan", help="scan one graph file or fixture for an admissible set")
    p.add_argument("graph", help=f"fixture name ({', '.join(NAMED)}) or .smcm path")
    p.add_argument("--max-size", type=int, default=-1)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("simulate", help="synthetic ATE errors on a graph")
    p.add_argument("graph", help="fixture name or .smcm path")
    p.add_argument("--n-samples", type=int, default=10_000)
    p.add_argument("--n-runs", type=int, default=10, help="SEM draws")
    p.add_argument("--root-law", choices=("noise", "uniform"), default="noise",
                   help="law of observed nodes with no parents and no latents")
    p.add_argument("--no-search", action="store_true", help="only the baseline estimators")
    p.add_argument("--out", help="CSV output path")
    _add_search_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("audit", help="run the search on a real dataset")
    p.add_argument("manifest", help=f"manifest JSON path or builtin name ({', '.join(BUILTIN)})")
    p.add_argument("--csv", help="override the manifest's csv_path")
    p.add_argument("--children", nargs="+", help="override the children set")
    p.add_argument("--n-boot", type=int, default=100)
    p.add_argument("--top-k", type=int, default=10, help="witnesses to bootstrap")
    p.add_argument("--out-dir")
    _add_search_flags(p)
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

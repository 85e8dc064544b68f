"""Synthetic ATE experiments on fixture graphs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .adjust import ate_frontdoor_naive, ate_twostage_fig3
from .graph import Smcm
from .search import SearchConfig, SearchRoles, run_algorithm1
from .sem import draw_model, generate, true_ate

COLUMNS = (
    "run", "true_ate", "ate_z", "ate_s", "ate_naive", "ate_twostage",
    "err_z", "err_s", "err_naive", "err_twostage", "runs_succeeded",
)


@dataclass
class SimulationRow:
    run: int
    true_ate: float
    ate_z: float
    ate_s: float
    ate_naive: float
    ate_twostage: float
    runs_succeeded: int

    @property
    def errors(self) -> dict[str, float]:
        return {
            "err_z": abs(self.ate_z - self.true_ate),
            "err_s": abs(self.ate_s - self.true_ate),
            "err_naive": abs(self.ate_naive - self.true_ate),
            "err_twostage": abs(self.ate_twostage - self.true_ate),
        }

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("run", "true_ate", "ate_z", "ate_s", "ate_naive", "ate_twostage")}
        out.update(self.errors)
        out["runs_succeeded"] = self.runs_succeeded
        return out


def twostage_roles(g: Smcm) -> dict | None:
    """Column roles for the two-stage estimator when the graph has its shape:
    one pre-treatment node Z1 feeding T and B, and a single mediator Z2 between
    B and Y."""
    r = g.roles
    t, y = r.treatment, r.outcome
    if len(r.children) != 1:
        return None
    (b,) = tuple(r.children)
    z1 = set(g.parents(t))
    z2 = set(g.parents(y))
    if len(z1) != 1 or len(z2) != 1 or g.n_nodes != 5:
        return None
    (z1,), (z2,) = tuple(z1), tuple(z2)
    if not (g.has_edge(z1, b) and g.has_edge(b, z2)):
        return None
    n = g.names
    return {"t": n[t], "z1": [n[z1]], "b_cols": [n[b]], "z2": [n[z2]], "y": n[y]}


def simulate(
    g: Smcm,
    n_samples: int,
    n_runs: int,
    cfg: SearchConfig,
    seed: int = 0,
    root_law: str = "noise",
    run_search: bool = True,
    n_jobs: int = 1,
) -> list[SimulationRow]:
    """Per run: draw a fresh SEM, sample observational data, estimate."""
    roles = SearchRoles.from_graph(g)
    two = twostage_roles(g)
    rows = []
    for run in range(n_runs):
        rng = np.random.default_rng(np.random.SeedSequence([seed, run]))
        model = draw_model(g, rng, root_law=root_law)
        data = generate(model, n_samples, "observational", rng).table
        truth = true_ate(model)
        naive = ate_frontdoor_naive(data, roles.treatment, list(roles.children), roles.outcome)
        eq3 = ate_twostage_fig3(data, seed=run, **two) if two else math.nan
        if run_search:
            rep = run_algorithm1(data, roles, replace(cfg, seed=cfg.seed + run), n_jobs=n_jobs)
            a_z, a_s, c1 = rep.ate_z, rep.ate_s, rep.runs_succeeded
        else:
            a_z = a_s = math.nan
            c1 = 0
        rows.append(SimulationRow(run, truth, a_z, a_s, naive, eq3, c1))
    return rows


def summarize(rows: list[SimulationRow]) -> dict:
    """Mean absolute errors over runs; NaN entries (failed searches) are skipped."""
    out = {"n_runs": len(rows)}
    for key in ("err_z", "err_s", "err_naive", "err_twostage"):
        vals = np.array([r.errors[key] for r in rows], dtype=float)
        vals = vals[np.isfinite(vals)]
        out[key] = float(vals.mean()) if vals.size else None
        out[key + "_se"] = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else None
    out["search_failures"] = sum(1 for r in rows if not math.isfinite(r.ate_z))
    return out


def write_rows(rows: list[SimulationRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in rows:
            d = r.as_dict()
            writer.writerow([_fmt(d[c]) for c in COLUMNS])


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.10g}"
    return str(v)

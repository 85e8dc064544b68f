"""Data-driven search for admissible adjustment sets and averaged ATE estimates.

For each run the data is split into train and test halves. On the training
half every candidate Z (by size, then lexicographically) is tested for

    B indep Y | T, Z                          (p_eq4)

and every split Z = Z_i + Z_o (Z_o by size, then lexicographically) for

    Z_i indep T   and   Z_o indep T | B, Z_i  (p_eq5i, p_eq5ii)

A candidate is accepted when all three p-values exceed ``p_v``. Accepted
candidates contribute two plug-in estimates on the test half: one adjusting
for Z and one for S = (B, Z_i). Estimates are averaged within a run over the
c2 accepted candidates, then over the c1 runs that accepted anything.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Callable, Iterator, Sequence

import numpy as np

from .adjust import EstimationError, ate_plugin, fit_outcome_regression
from .citest import CiMethod, test_ci
from .data import DataTable
from .graph import Smcm, m_separated

log = logging.getLogger(__name__)

FAILURE_MESSAGE = "Failed to find Z = (Z_i, Z_o) satisfying the testable conditions"
TEST_NAMES = ("eq4", "eq5i", "eq5ii")


@dataclass(frozen=True)
class SearchRoles:
    treatment: str
    outcome: str
    children: tuple[str, ...]

    def __post_init__(self):
        names = [self.treatment, self.outcome, *self.children]
        if len(set(names)) != len(names):
            raise ValueError("treatment, outcome and children must be distinct")

    @classmethod
    def from_graph(cls, g: Smcm) -> "SearchRoles":
        r = g.roles
        return cls(g.names[r.treatment], g.names[r.outcome], tuple(g.names[b] for b in sorted(r.children)))


@dataclass(frozen=True)
class SearchConfig:
    n_r: int = 100
    p_v: float = 0.1
    max_subset_size: int | None = 5
    split_fraction: float = 0.5
    ci_method: CiMethod = field(default_factory=CiMethod)
    seed: int = 0

    def __post_init__(self):
        if self.n_r < 1:
            raise ValueError("n_r must be >= 1")
        if not 0.0 < self.p_v < 1.0:
            raise ValueError("p_v must lie in (0, 1)")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must lie in (0, 1)")
        if self.max_subset_size is not None and self.max_subset_size < 0:
            raise ValueError("max_subset_size must be non-negative")

    def as_dict(self) -> dict:
        return {
            "n_r": self.n_r, "p_v": self.p_v, "max_subset_size": self.max_subset_size,
            "split_fraction": self.split_fraction, "seed": self.seed,
            "ci_method": self.ci_method.as_dict(),
        }


@dataclass(frozen=True)
class AdmissibleSet:
    z: tuple[str, ...]
    z_i: tuple[str, ...]
    z_o: tuple[str, ...]
    p_eq4: float = 1.0
    p_eq5i: float = 1.0
    p_eq5ii: float = 1.0

    @property
    def key(self) -> tuple:
        return (self.z, self.z_i, self.z_o)

    @property
    def min_p(self) -> float:
        return min(self.p_eq4, self.p_eq5i, self.p_eq5ii)

    def as_dict(self) -> dict:
        return {
            "z": list(self.z), "z_i": list(self.z_i), "z_o": list(self.z_o),
            "p_eq4": self.p_eq4, "p_eq5i": self.p_eq5i, "p_eq5ii": self.p_eq5ii,
        }


@dataclass
class RunRecord:
    index: int
    witnesses: list[AdmissibleSet]
    contributions: list[tuple[float, float]]  # (ate_z, ate_s) per accepted candidate
    flags: list[str] = field(default_factory=list)

    @property
    def c2(self) -> int:
        return len(self.witnesses)

    @property
    def ate_z(self) -> float | None:
        return sum(c[0] for c in self.contributions) / self.c2 if self.c2 else None

    @property
    def ate_s(self) -> float | None:
        return sum(c[1] for c in self.contributions) / self.c2 if self.c2 else None


@dataclass
class AteReport:
    ate_z: float
    ate_s: float
    runs_succeeded: int
    candidates_per_run: list[int]
    failure: bool
    runs: list[RunRecord]
    config: SearchConfig
    roles: SearchRoles

    @property
    def witnesses(self) -> list[list[AdmissibleSet]]:
        return [r.witnesses for r in self.runs]

    @property
    def message(self) -> str:
        return FAILURE_MESSAGE if self.failure else "ok"

    def run_estimates(self) -> np.ndarray:
        """(c1, 2) array of per-run (ATE_z, ATE_s) for contributing runs."""
        rows = [(r.ate_z, r.ate_s) for r in self.runs if r.c2]
        return np.array(rows, dtype=float).reshape(-1, 2)

    def witness_counts(self) -> list[tuple[tuple, int]]:
        counts: dict[tuple, int] = {}
        for run in self.runs:
            for w in run.witnesses:
                counts[w.key] = counts.get(w.key, 0) + 1
        return sorted(counts.items(), key=lambda kv: (-kv[1], len(kv[0][0]), kv[0]))

    def as_dict(self, include_witnesses: bool = True) -> dict:
        est = self.run_estimates()
        out = {
            "ate_z": None if self.failure else self.ate_z,
            "ate_s": None if self.failure else self.ate_s,
            "ate_z_std": None if self.failure else float(est[:, 0].std()),
            "ate_s_std": None if self.failure else float(est[:, 1].std()),
            "runs_succeeded": self.runs_succeeded,
            "candidates_per_run": self.candidates_per_run,
            "failure": self.failure,
            "message": self.message,
            "roles": {"treatment": self.roles.treatment, "outcome": self.roles.outcome,
                      "children": list(self.roles.children)},
            "config": self.config.as_dict(),
        }
        if include_witnesses:
            out["witness_counts"] = [
                {"z": list(k[0]), "z_i": list(k[1]), "z_o": list(k[2]), "runs": c}
                for k, c in self.witness_counts()
            ]
        return out


# CI testers ---------------------------------------------------------------------

CiTester = Callable[[DataTable, tuple, tuple, tuple], float]


class DataCiTester:
    """Finite-sample tester with a per-table result cache."""

    def __init__(self, method: CiMethod):
        self.method = method
        self._cache: dict = {}
        self._table_id = None

    def __call__(self, data: DataTable, x: tuple, y: tuple, cond: tuple) -> float:
        if not x or not y:
            return 1.0
        if id(data) != self._table_id:
            self._cache.clear()
            self._table_id = id(data)
        key = (tuple(sorted(x)), tuple(sorted(y)), tuple(sorted(cond)))
        if key not in self._cache:
            self._cache[key] = test_ci(data, key[0], key[1], key[2], self.method).p_value
        return self._cache[key]


class OracleCiTester:
    """Answers with exact m-separation on a known graph: 1 if separated, else 0."""

    def __init__(self, g: Smcm):
        self.g = g

    def __call__(self, data, x: tuple, y: tuple, cond: tuple) -> float:
        idx = self.g.index
        ok = m_separated(self.g, [idx(v) for v in x], [idx(v) for v in y], [idx(v) for v in cond])
        return 1.0 if ok else 0.0


# enumeration ------------------------------------------------------------------

def candidate_pool(data: DataTable, roles: SearchRoles) -> tuple[str, ...]:
    excluded = {roles.treatment, roles.outcome, *roles.children}
    return tuple(v for v in data.variables if v not in excluded)


def _subsets(items: Sequence, max_size: int | None = None) -> Iterator[tuple]:
    top = len(items) if max_size is None else min(max_size, len(items))
    for k in range(top + 1):
        yield from combinations(items, k)


def accepted_candidates(
    train: DataTable,
    roles: SearchRoles,
    p_v: float,
    tester: CiTester,
    max_size: int | None = None,
    pool: Sequence[str] | None = None,
) -> list[AdmissibleSet]:
    """Every (Z, Z_i, Z_o) passing the three tests, in canonical order."""
    t, y, b = roles.treatment, roles.outcome, tuple(roles.children)
    pool = candidate_pool(train, roles) if pool is None else tuple(pool)
    out = []
    for z in _subsets(pool, max_size):
        p4 = tester(train, b, (y,), (t, *z))
        if not p4 > p_v:
            continue
        for z_o in _subsets(z):
            z_i = tuple(v for v in z if v not in z_o)
            p5i = tester(train, z_i, (t,), ())
            if not p5i > p_v:
                continue
            p5ii = tester(train, z_o, (t,), (*b, *z_i))
            if not p5ii > p_v:
                continue
            out.append(AdmissibleSet(tuple(z), z_i, tuple(z_o), p4, p5i, p5ii))
    return out


# Algorithm runs ---------------------------------------------------------------

def split_rows(n: int, fraction: float, seed: int, run: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, run]))
    perm = rng.permutation(n)
    n_train = int(round(fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _check_inputs(data: DataTable, roles: SearchRoles) -> None:
    for v in (roles.treatment, roles.outcome, *roles.children):
        if v not in data.groups:
            raise ValueError(f"column {v!r} not in data")
    t = data.vector(roles.treatment)
    if not np.all(np.isin(t, (0.0, 1.0))):
        raise ValueError("treatment must be binary 0/1")


def _one_run(data: DataTable, roles: SearchRoles, cfg: SearchConfig, run: int,
             tester: CiTester | None) -> RunRecord:
    train_idx, test_idx = split_rows(data.n_rows, cfg.split_fraction, cfg.seed, run)
    train, test = data.take(train_idx), data.take(test_idx)
    if tester is None:
        tester = DataCiTester(replace(cfg.ci_method, seed=cfg.ci_method.seed + run))
    accepted = accepted_candidates(train, roles, cfg.p_v, tester, cfg.max_subset_size)
    t, y, b = roles.treatment, roles.outcome, list(roles.children)
    p_t = float(train.vector(t).mean())
    models: dict[tuple, object] = {}
    record = RunRecord(run, [], [])

    def estimate(adjust: tuple) -> float:
        if adjust not in models:
            models[adjust] = fit_outcome_regression(train, y, list(adjust), t)
        return ate_plugin(test, models[adjust], list(adjust), t, p_t)

    for w in accepted:
        try:
            a_z = estimate(w.z)
            a_s = estimate((*b, *w.z_i))
        except EstimationError as exc:
            record.flags.append(f"{w.key}: {exc}")
            continue
        record.witnesses.append(w)
        record.contributions.append((a_z, a_s))
    return record


def _run_job(args):
    return _one_run(*args)


def run_algorithm1(
    data: DataTable,
    roles: SearchRoles,
    cfg: SearchConfig,
    ci_test: CiTester | None = None,
    n_jobs: int = 1,
) -> AteReport:
    """Repeated split / search / estimate; failure is a result, not an error."""
    _check_inputs(data, roles)
    jobs = [(data, roles, cfg, run, ci_test) for run in range(cfg.n_r)]
    if n_jobs > 1 and cfg.n_r > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            runs = list(pool.map(_run_job, jobs))
    else:
        runs = [_run_job(j) for j in jobs]
    good = [r for r in runs if r.c2]
    c1 = len(good)
    if c1:
        ate_z = sum(r.ate_z for r in good) / c1
        ate_s = sum(r.ate_s for r in good) / c1
    else:
        ate_z = ate_s = float("nan")
        log.info(FAILURE_MESSAGE)
    return AteReport(ate_z, ate_s, c1, [r.c2 for r in runs], c1 == 0, runs, cfg, roles)


# bootstrap diagnostics ----------------------------------------------------------

@dataclass
class BootstrapResult:
    witness: AdmissibleSet
    samples: dict[str, np.ndarray]

    @property
    def medians(self) -> dict[str, float]:
        return {k: float(np.median(v)) for k, v in self.samples.items()}

    @property
    def min_median(self) -> float:
        return min(self.medians.values())


def witness_pvalues(data: DataTable, w: AdmissibleSet, roles: SearchRoles, tester: CiTester) -> tuple[float, float, float]:
    t, y, b = roles.treatment, roles.outcome, tuple(roles.children)
    return (
        tester(data, b, (y,), (t, *w.z)),
        tester(data, w.z_i, (t,), ()),
        tester(data, w.z_o, (t,), (*b, *w.z_i)),
    )


def bootstrap_pvalues(
    data: DataTable,
    witness: AdmissibleSet,
    roles: SearchRoles,
    n_boot: int = 100,
    cfg: SearchConfig | None = None,
) -> BootstrapResult:
    """Recompute the three p-values on half-size subsamples drawn without replacement."""
    if n_boot < 1:
        raise ValueError("n_boot must be >= 1")
    cfg = cfg or SearchConfig()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xB007]))
    half = data.n_rows // 2
    samples = {k: np.zeros(n_boot) for k in TEST_NAMES}
    for i in range(n_boot):
        rows = np.sort(rng.choice(data.n_rows, half, replace=False))
        tester = DataCiTester(replace(cfg.ci_method, seed=cfg.ci_method.seed + i))
        for name, p in zip(TEST_NAMES, witness_pvalues(data.take(rows), witness, roles, tester)):
            samples[name][i] = p
    return BootstrapResult(witness, samples)


def select_witness(witnesses: Sequence[AdmissibleSet], boots: Sequence[BootstrapResult]) -> AdmissibleSet:
    """Highest minimum-over-tests median p-value; ties go to smaller Z, then list order."""
    if not witnesses:
        raise ValueError("no witnesses to select from")
    if len(boots) != len(witnesses):
        raise ValueError("need one bootstrap result per witness")
    best = min(
        range(len(witnesses)),
        key=lambda i: (-boots[i].min_median, len(witnesses[i].z), i),
    )
    return witnesses[best]


def write_bootstrap_csv(result: BootstrapResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["test_name", "bootstrap_index", "p_value"])
        for name in TEST_NAMES:
            for i, p in enumerate(result.samples[name]):
                writer.writerow([name, i, f"{p:.10g}"])


def reconstruct(report: AteReport) -> tuple[float, float]:
    """Recompute the reported averages from the per-candidate contributions."""
    per_run = [
        (sum(c[0] for c in r.contributions) / len(r.contributions),
         sum(c[1] for c in r.contributions) / len(r.contributions))
        for r in report.runs if r.contributions
    ]
    if not per_run:
        return float("nan"), float("nan")
    return (sum(p[0] for p in per_run) / len(per_run), sum(p[1] for p in per_run) / len(per_run))


def estimate_witness(data: DataTable, roles: SearchRoles, w: AdmissibleSet, cfg: SearchConfig) -> np.ndarray:
    """(n_r, 2) array of (ATE_z, ATE_s) for one fixed witness over the run splits."""
    t, y, b = roles.treatment, roles.outcome, list(roles.children)
    out = np.zeros((cfg.n_r, 2))
    for run in range(cfg.n_r):
        train_idx, test_idx = split_rows(data.n_rows, cfg.split_fraction, cfg.seed, run)
        train, test = data.take(train_idx), data.take(test_idx)
        p_t = float(train.vector(t).mean())
        for k, adjust in enumerate((list(w.z), b + list(w.z_i))):
            model = fit_outcome_regression(train, y, adjust, t)
            out[run, k] = ate_plugin(test, model, adjust, t, p_t)
    return out

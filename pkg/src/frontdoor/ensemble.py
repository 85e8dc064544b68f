"""Random semi-Markovian ensembles and graph-level scans for admissible sets.

A scan looks for Z (disjoint from T, Y and the treatment's children B) with

* B separated from Y given {T} and Z,
* a split Z = Z_i + Z_o where Z_i is marginally separated from T and
  Z_o is separated from T given B and Z_i.

All checks are exact m-separation queries on the known graph.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterator

import numpy as np

from .graph import GraphError, Smcm, ancestors, m_separated

log = logging.getLogger(__name__)

VARIANTS = ("no-grandparent", "no-parent")
DEFAULT_BOUND = 5


class ResampleExhausted(RuntimeError):
    """No graph with an eligible treatment was found within the draw budget."""


@dataclass(frozen=True)
class EnsembleParams:
    p: int
    d: float
    q: float
    variant: str = "no-grandparent"
    max_subset_size: int | None = DEFAULT_BOUND
    seed: int = 0

    def __post_init__(self):
        if self.p < 4:
            raise ValueError("p must be at least 4")
        if not 0 < self.d <= self.p / 2:
            raise ValueError("d must satisfy 0 < d <= p/2")
        if not 0 <= self.q <= self.p:
            raise ValueError("q must satisfy 0 <= q <= p")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.max_subset_size is not None and self.max_subset_size < 0:
            raise ValueError("max_subset_size must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit non-negative integer")


@dataclass(frozen=True)
class Witness:
    z: tuple[int, ...]
    z_i: tuple[int, ...]
    z_o: tuple[int, ...]

    def names(self, g: Smcm) -> dict[str, list[str]]:
        return {k: [g.names[v] for v in getattr(self, k)] for k in ("z", "z_i", "z_o")}


@dataclass(frozen=True)
class ScanOutcome:
    success: bool
    witness: Witness | None = None


# sampling -----------------------------------------------------------------

def edge_probabilities(p: int, d: float) -> np.ndarray:
    """Upper-triangular matrix of directed edge probabilities (0-based ids)."""
    prob = np.zeros((p, p))
    for j in range(2, p + 1):  # 1-based column index
        pj = 0.5 if j <= 2 * d else d / (j - 1)
        prob[: j - 1, j - 1] = pj
    return prob


def eligible_treatments(g: Smcm, outcome: int, variant: str) -> list[int]:
    parents = set(g.parents(outcome))
    excluded = set(parents)
    if variant == "no-grandparent":
        for p in parents:
            excluded.update(g.parents(p))
    return sorted(ancestors(g, outcome) - excluded)


def draw_smcm(params: EnsembleParams, rng: np.random.Generator) -> Smcm | None:
    """One draw from the ensemble; ``None`` when no node qualifies as treatment."""
    p = params.p
    prob = edge_probabilities(p, params.d)
    u = rng.random((p, p))
    directed = [(i, j) for i in range(p) for j in range(i + 1, p) if u[i, j] < prob[i, j]]
    u = rng.random((p, p))
    q_prob = params.q / p
    bidirected = [(i, j) for i in range(p) for j in range(i + 1, p) if u[i, j] < q_prob]
    g = Smcm(p, directed, bidirected)
    y = p - 1
    candidates = eligible_treatments(g, y, params.variant)
    if not candidates:
        return None
    t = candidates[int(rng.integers(len(candidates)))]
    if not g.has_bidirected(t, y):
        g = Smcm(p, directed, bidirected + [(t, y)])
    names = [f"V{i + 1}" for i in range(p)]
    names[t], names[y] = "T", "Y"
    g = Smcm(p, g.directed_edges, g.bidirected_edges, names=names)
    return g.with_roles(t, y)


def sample_smcm(
    params: EnsembleParams,
    rng: np.random.Generator,
    max_draws: int = 1000,
    return_redraws: bool = False,
):
    """Draw graphs until one has an eligible treatment.

    Returns the graph, or ``(graph, n_redraws)`` when ``return_redraws``.
    """
    for k in range(max_draws):
        g = draw_smcm(params, rng)
        if g is not None:
            return (g, k) if return_redraws else g
    raise ResampleExhausted(f"no eligible treatment in {max_draws} draws for {params}")


def graph_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


# scanning -----------------------------------------------------------------

def candidate_pool(g: Smcm) -> tuple[int, ...]:
    r = _roles(g)
    excluded = {r.treatment, r.outcome} | set(r.children)
    return tuple(v for v in range(g.n_nodes) if v not in excluded)


def _roles(g: Smcm):
    if g.roles is None:
        raise GraphError("graph has no roles")
    return g.roles


def _subsets(items, max_size=None):
    top = len(items) if max_size is None else min(max_size, len(items))
    for k in range(top + 1):
        yield from combinations(items, k)


def iter_witnesses(g: Smcm, max_size: int | None = None) -> Iterator[Witness]:
    """All (Z, Z_i, Z_o) certificates in canonical order.

    Z runs over candidate subsets by size, then lexicographically; for each
    Z the split runs over Z_o subsets in the same order.
    """
    r = _roles(g)
    t, y, b = r.treatment, r.outcome, frozenset(r.children)
    if y in b:
        return
    pool = candidate_pool(g)
    # a set is separated from T iff each member is, so Z_i must live here
    free_of_t = frozenset(v for v in pool if m_separated(g, v, t))
    for z in _subsets(pool, max_size):
        if not m_separated(g, b, y, {t, *z}):
            continue
        for z_o in _subsets(z):
            z_i = tuple(v for v in z if v not in z_o)
            if not free_of_t.issuperset(z_i):
                continue
            if not m_separated(g, z_i, t):
                continue
            if not m_separated(g, z_o, t, b | set(z_i)):
                continue
            yield Witness(tuple(z), z_i, tuple(z_o))


def scan_graph(g: Smcm, max_size: int | None = None) -> ScanOutcome:
    for w in iter_witnesses(g, max_size):
        return ScanOutcome(True, w)
    return ScanOutcome(False)


def verify_witness(g: Smcm, w: Witness) -> bool:
    r = _roles(g)
    t, y, b = r.treatment, r.outcome, frozenset(r.children)
    return (
        m_separated(g, b, y, {t, *w.z})
        and m_separated(g, w.z_i, t)
        and m_separated(g, w.z_o, t, b | set(w.z_i))
    )


# ensembles ----------------------------------------------------------------

@dataclass
class EnsembleResult:
    params: EnsembleParams
    n_graphs: int
    successes_exhaustive: int = 0
    successes_bounded: int = 0
    redraws: int = 0
    outcomes: list[ScanOutcome] = field(default_factory=list, repr=False)

    def as_row(self) -> dict:
        p = self.params
        return {
            "p": p.p, "d": p.d, "q": p.q, "variant": p.variant,
            "n_graphs": self.n_graphs,
            "successes_exhaustive": self.successes_exhaustive,
            "successes_bounded": self.successes_bounded,
            "redraws": self.redraws, "seed": p.seed,
        }


def _one_graph(args) -> tuple[ScanOutcome, bool, int]:
    params, index = args
    rng = graph_rng(params.seed, index)
    redraws = 0
    while True:
        try:
            g, k = sample_smcm(params, rng, return_redraws=True)
            redraws += k
            break
        except ResampleExhausted:
            redraws += 1000
            log.warning("graph %d: draw budget exhausted, redrawing", index)
    full = scan_graph(g)
    # the first exhaustive witness is a smallest one, so it settles the bounded scan
    bound = params.max_subset_size
    bounded = full.success and (bound is None or len(full.witness.z) <= bound)
    return full, bounded, redraws


def run_ensemble(params: EnsembleParams, n_graphs: int, n_jobs: int = 1) -> EnsembleResult:
    """Sample ``n_graphs`` graphs and count exhaustive / size-bounded successes."""
    if n_graphs < 0:
        raise ValueError("n_graphs must be non-negative")
    result = EnsembleResult(params, n_graphs)
    jobs = [(params, i) for i in range(n_graphs)]
    if n_jobs > 1 and n_graphs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(_one_graph, jobs, chunksize=max(1, n_graphs // (4 * n_jobs))))
    else:
        rows = [_one_graph(j) for j in jobs]
    for full, bounded, redraws in rows:
        result.outcomes.append(full)
        result.successes_exhaustive += full.success
        result.successes_bounded += bounded
        result.redraws += redraws
    log.info("ensemble %s: %s", params, result.as_row())
    return result

"""Linear structural equation models over an SMCM.

Every bidirected edge is realised by one latent variable drawn from
Unif[1,2] that enters both endpoints. Observed non-treatment nodes are linear
in their observed and latent parents plus Gaussian noise; the treatment is a
Bernoulli draw through a sigmoid of the same kind of linear score.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DataTable
from .graph import GraphError, Smcm

REGIMES = ("observational", "do(T=0)", "do(T=1)")
ROOT_LAWS = ("noise", "uniform")


@dataclass(frozen=True)
class NodeEquation:
    parents: tuple[int, ...]
    weights: np.ndarray
    latents: tuple[int, ...]  # indices into the model's bidirected edge list
    latent_weights: np.ndarray

    @property
    def n_coefficients(self) -> int:
        return len(self.parents) + len(self.latents)


@dataclass(frozen=True)
class SemModel:
    """``root_law`` controls observed nodes with no parents and no latents:
    ``"noise"`` leaves them as pure noise, ``"uniform"`` draws them from
    Unif[1,2] like the latents."""

    graph: Smcm
    equations: tuple[NodeEquation, ...]
    latent_edges: tuple[tuple[int, int], ...]
    noise_scale: float = 0.1
    root_law: str = "noise"

    def __post_init__(self):
        if self.noise_scale <= 0:
            raise ValueError("noise_scale must be positive")
        if self.root_law not in ROOT_LAWS:
            raise ValueError(f"root_law must be one of {ROOT_LAWS}")
        if self.graph.roles is None:
            raise GraphError("SEM needs a graph with roles")

    @property
    def treatment(self) -> int:
        return self.graph.roles.treatment

    @property
    def outcome(self) -> int:
        return self.graph.roles.outcome

    def coefficient(self, parent: int, child: int) -> float:
        eq = self.equations[child]
        return float(eq.weights[eq.parents.index(parent)])

    def coefficients(self) -> np.ndarray:
        return np.concatenate(
            [np.concatenate([e.weights, e.latent_weights]) for e in self.equations]
        )


@dataclass(frozen=True)
class SampleBatch:
    table: DataTable
    regime: str


def draw_model(
    g: Smcm,
    rng: np.random.Generator,
    noise_scale: float = 0.1,
    root_law: str = "noise",
) -> SemModel:
    if g.roles is None:
        raise GraphError("SEM needs a graph with roles")
    latent_edges = tuple(sorted(g.bidirected_edges))
    touching: dict[int, list[int]] = {v: [] for v in range(g.n_nodes)}
    for k, (a, b) in enumerate(latent_edges):
        touching[a].append(k)
        touching[b].append(k)
    eqs = []
    for v in range(g.n_nodes):
        parents = tuple(sorted(g.parents(v)))
        lat = tuple(touching[v])
        w = rng.uniform(1.0, 2.0, len(parents))
        lw = rng.uniform(1.0, 2.0, len(lat))
        eqs.append(NodeEquation(parents, w, lat, lw))
    return SemModel(g, tuple(eqs), latent_edges, noise_scale, root_law)


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def simulate(model: SemModel, n: int, regime: str, rng: np.random.Generator) -> np.ndarray:
    """Rows x nodes sample matrix.

    Random numbers are drawn in a fixed layout independent of the regime, so
    the same generator state gives coupled samples across regimes.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}")
    g = model.graph
    p = g.n_nodes
    latents = rng.uniform(1.0, 2.0, (n, len(model.latent_edges)))
    noise = rng.standard_normal((n, p))
    coin = rng.random(n)
    roots = rng.uniform(1.0, 2.0, (n, p)) if model.root_law == "uniform" else None
    x = np.zeros((n, p))
    t = model.treatment
    for v in g.topological_order:
        eq = model.equations[v]
        if v == t and regime != "observational":
            x[:, v] = 1.0 if regime == "do(T=1)" else 0.0
            continue
        score = x[:, list(eq.parents)] @ eq.weights + latents[:, list(eq.latents)] @ eq.latent_weights
        if v == t:
            x[:, v] = (coin < _sigmoid(score)).astype(float)
        elif roots is not None and eq.n_coefficients == 0:
            x[:, v] = roots[:, v]
        else:
            x[:, v] = score + model.noise_scale * noise[:, v]
    return x


def generate(model: SemModel, n: int, regime: str, rng: np.random.Generator) -> SampleBatch:
    x = simulate(model, n, regime, rng)
    return SampleBatch(DataTable(list(model.graph.names), x), regime)


def true_ate(model: SemModel) -> float:
    """Sum over directed T-to-Y paths of coefficient products."""
    g = model.graph
    effect = np.zeros(g.n_nodes)
    t = model.treatment
    effect[t] = 1.0
    for v in g.topological_order:
        if v == t:
            continue
        eq = model.equations[v]
        effect[v] = float(effect[list(eq.parents)] @ eq.weights) if eq.parents else 0.0
    return float(effect[model.outcome])


def monte_carlo_ate(model: SemModel, n: int, rng: np.random.Generator) -> tuple[float, float]:
    """Independent do(T=1) and do(T=0) samples; returns (estimate, standard error)."""
    y = model.outcome
    y1 = simulate(model, n, "do(T=1)", rng)[:, y]
    y0 = simulate(model, n, "do(T=0)", rng)[:, y]
    est = float(y1.mean() - y0.mean())
    se = float(np.sqrt(y1.var(ddof=1) / n + y0.var(ddof=1) / n))
    return est, se


def write_batch(batch: SampleBatch, path, extra: dict | None = None) -> Path:
    """Write the batch as CSV plus a JSON sidecar recording the regime."""
    path = Path(path)
    batch.table.to_csv(path)
    side = path.with_suffix(".json")
    meta = {"regime": batch.regime, "rows": batch.table.n_rows, "columns": list(batch.table.columns)}
    meta.update(extra or {})
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return side

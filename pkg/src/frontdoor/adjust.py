"""Effect estimators: plug-in front-door style adjustment, the two-stage
estimator for the Z1 -> (T, B) counterexample graph, and exact evaluators for
small discrete models used as oracles.

All continuous estimators target the first moment
E[Y | do(T=1)] - E[Y | do(T=0)] with a binary treatment.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize

from .data import DataTable
from .graph import Smcm

PENALTY_GRID = tuple(10.0**k for k in range(-3, 4))
N_FOLDS = 5


class EstimationError(ValueError):
    pass


# ridge outcome regression ---------------------------------------------------

@dataclass(frozen=True)
class RegressionModel:
    design: tuple[str, ...]  # derived column names, treatment last
    weights: np.ndarray
    intercept: float
    penalty: float
    flags: tuple[str, ...] = ()

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.intercept + np.asarray(x, dtype=float) @ self.weights


def _ridge_path(x: np.ndarray, y: np.ndarray, penalties) -> list[tuple[np.ndarray, float]]:
    """Closed-form ridge fits (unpenalized intercept) for several penalties."""
    mx, my = x.mean(axis=0), y.mean()
    u, s, vt = np.linalg.svd(x - mx, full_matrices=False)
    uty = u.T @ (y - my)
    out = []
    for lam in penalties:
        w = vt.T @ (s / (s**2 + lam) * uty)
        out.append((w, float(my - mx @ w)))
    return out


def ridge_fit(x: np.ndarray, y: np.ndarray, penalty: float) -> tuple[np.ndarray, float]:
    return _ridge_path(x, y, [penalty])[0]


def select_penalty(x: np.ndarray, y: np.ndarray, grid=PENALTY_GRID, k: int = N_FOLDS) -> float:
    """k-fold cross-validated penalty; contiguous folds keep it deterministic."""
    n = x.shape[0]
    err = np.zeros(len(grid))
    for test in np.array_split(np.arange(n), k):
        mask = np.ones(n, dtype=bool)
        mask[test] = False
        for g, (w, b) in enumerate(_ridge_path(x[mask], y[mask], grid)):
            err[g] += np.sum((y[test] - b - x[test] @ w) ** 2)
    return float(grid[int(np.argmin(err))])


def fit_ridge_cv(
    x: np.ndarray, y: np.ndarray, design: Sequence[str], grid=PENALTY_GRID, k: int = N_FOLDS
) -> RegressionModel:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] < (x.shape[1] + 2) * 10:
        raise EstimationError(
            f"need at least {(x.shape[1] + 2) * 10} rows for {x.shape[1]} covariates"
        )
    flags: tuple[str, ...] = ()
    xc = x - x.mean(axis=0)
    if x.shape[1] and np.linalg.matrix_rank(xc) < x.shape[1]:
        penalty = float(max(grid))
        flags = ("rank_deficient",)
    else:
        penalty = select_penalty(x, y, grid, k)
    w, b = ridge_fit(x, y, penalty)
    return RegressionModel(tuple(design), w, b, penalty, flags)


def fit_outcome_regression(
    data: DataTable, y: str, z_cols: Sequence[str], t_col: str, grid=PENALTY_GRID
) -> RegressionModel:
    """Ridge regression of Y on the columns of Z then T (treatment last)."""
    design = data.columns_of(list(z_cols)) + data.columns_of([t_col])
    x = data.matrix(list(z_cols) + [t_col])
    return fit_ridge_cv(x, data.vector(y), design, grid)


# plug-in estimators -----------------------------------------------------------

def _groups(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    treated, control = t == 1, t == 0
    if not treated.any():
        raise EstimationError("treated group (T=1) is empty")
    if not control.any():
        raise EstimationError("control group (T=0) is empty")
    return treated, control


def ate_plugin(
    data_test: DataTable,
    model,
    adjust_cols: Sequence[str],
    t_col: str,
    p_t: float,
    weights: np.ndarray | None = None,
) -> float:
    """Mean over treated rows of m minus the mean over control rows, where
    m(j) = sum over t' of prediction(adjust_j, t') * P(t').

    ``model`` needs ``design`` (adjustment columns then the treatment) and
    ``predict``. Optional row ``weights`` turn the row means into weighted
    means, which lets a table of configurations stand in for a distribution.
    """
    if not 0.0 <= p_t <= 1.0:
        raise ValueError("p_t must be a probability")
    expected = tuple(data_test.columns_of(adjust_cols) + data_test.columns_of([t_col]))
    if tuple(model.design) != expected:
        raise EstimationError(f"model design {model.design} does not match {expected}")
    adj = data_test.matrix(adjust_cols)
    t = data_test.vector(t_col)
    treated, control = _groups(t)
    n = adj.shape[0]
    m = np.zeros(n)
    for tv, prob in ((0.0, 1.0 - p_t), (1.0, p_t)):
        m += prob * model.predict(np.column_stack([adj, np.full(n, tv)]))
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    return float(np.average(m[treated], weights=w[treated]) - np.average(m[control], weights=w[control]))


def ate_frontdoor_naive(
    data: DataTable,
    t_col: str,
    b_cols: Sequence[str],
    y: str,
    test: DataTable | None = None,
) -> float:
    """Front-door plug-in with the treatment's children as the mediator set.

    Fitted on ``data``; averaged over ``test`` (defaults to ``data``).
    """
    model = fit_outcome_regression(data, y, b_cols, t_col)
    p_t = float(data.vector(t_col).mean())
    return ate_plugin(test if test is not None else data, model, b_cols, t_col, p_t)


def _fit_logistic(x: np.ndarray, t: np.ndarray, l2: float = 1e-6) -> np.ndarray:
    """Returns coefficients with the intercept first."""
    xd = np.column_stack([np.ones(len(t)), x])

    def loss(beta):
        s = xd @ beta
        val = np.sum(np.logaddexp(0.0, s) - t * s) + 0.5 * l2 * beta[1:] @ beta[1:]
        grad = xd.T @ (_sigmoid(s) - t)
        grad[1:] += l2 * beta[1:]
        return val, grad

    res = optimize.minimize(loss, np.zeros(xd.shape[1]), jac=True, method="L-BFGS-B")
    return res.x


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _linear_conditional(target: np.ndarray, given: np.ndarray):
    """OLS fit target ~ given; returns (coef incl. intercept row, residual rows)."""
    xd = np.column_stack([np.ones(given.shape[0]), given])
    coef, *_ = np.linalg.lstsq(xd, target, rcond=None)
    return coef, target - xd @ coef


def _is_discrete(a: np.ndarray, max_levels: int = 2) -> bool:
    return all(len(np.unique(col)) <= max_levels for col in np.atleast_2d(a.T))


def ate_twostage_fig3(
    data: DataTable,
    t: str,
    z1: Sequence[str],
    b_cols: Sequence[str],
    z2: Sequence[str],
    y: str,
    n_draws: int = 10_000,
    seed: int = 0,
) -> float:
    """Plug-in for the estimand

        P(y | do t) = sum over z1, b, z2 of
            [sum over t' of P(y | z1, z2, t') P(t' | z1)] P(z2 | b) P(b | t, z1) P(z1)

    Continuous data: ridge outcome model, logistic P(t | z1), linear
    conditionals for B and Z2 with resampled residuals, mixed by Monte Carlo
    with common random numbers across t. Binary data: exact summation over
    the empirical joint.
    """
    z1, b_cols, z2 = list(z1), list(b_cols), list(z2)
    names = z1 + b_cols + z2
    if len(set(names + [t, y])) != len(names) + 2:
        raise EstimationError("roles overlap")
    everything = data.matrix(names + [t, y])
    if _is_discrete(everything):
        joint = DiscreteJoint.from_table(data, names + [t, y])
        dist = eq3_discrete(joint, t, z1, b_cols, z2, y)
        return expectation(dist[1]) - expectation(dist[0])

    tv = data.vector(t)
    _groups(tv)
    z1m, bm, z2m = data.matrix(z1), data.matrix(b_cols), data.matrix(z2)
    outcome = fit_outcome_regression(data, y, z1 + z2, t)
    beta = _fit_logistic(z1m, tv)
    b_coef, b_res = _linear_conditional(bm, np.column_stack([tv, z1m]))
    z2_coef, z2_res = _linear_conditional(z2m, bm)

    rng = np.random.default_rng(seed)
    n = data.n_rows
    i_z1 = rng.integers(n, size=n_draws)
    i_b = rng.integers(n, size=n_draws)
    i_z2 = rng.integers(n, size=n_draws)
    z1s = z1m[i_z1]
    pi1 = _sigmoid(beta[0] + z1s @ beta[1:])
    means = []
    for tval in (0.0, 1.0):
        bs = np.column_stack([np.ones(n_draws), np.full(n_draws, tval), z1s]) @ b_coef + b_res[i_b]
        z2s = np.column_stack([np.ones(n_draws), bs]) @ z2_coef + z2_res[i_z2]
        m = np.zeros(n_draws)
        for tp, w in ((0.0, 1.0 - pi1), (1.0, pi1)):
            m += w * outcome.predict(np.column_stack([z1s, z2s, np.full(n_draws, tp)]))
        means.append(m.mean())
    return float(means[1] - means[0])


# discrete joints ----------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteJoint:
    """Probability table over named finite-support variables (values 0..k-1)."""

    variables: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        if self.table.ndim != len(self.variables):
            raise ValueError("table rank must equal the number of variables")
        if np.any(self.table < 0):
            raise ValueError("negative probability")
        if abs(self.table.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")

    @classmethod
    def from_table(cls, data: DataTable, variables: Sequence[str]) -> "DiscreteJoint":
        cols = np.column_stack([data.vector(v) for v in variables]).astype(int)
        if cols.min() < 0:
            raise ValueError("discrete values must be non-negative integers")
        shape = tuple(int(c.max()) + 1 for c in cols.T)
        counts = np.zeros(shape)
        np.add.at(counts, tuple(cols.T), 1.0)
        return cls(tuple(variables), counts / counts.sum())

    def marginal(self, keep: Sequence[str]) -> np.ndarray:
        """Array over ``keep`` in the order given."""
        keep = list(keep)
        missing = [v for v in keep if v not in self.variables]
        if missing:
            raise KeyError(f"unknown variables {missing}")
        drop = tuple(i for i, v in enumerate(self.variables) if v not in keep)
        m = self.table.sum(axis=drop)
        kept = [v for v in self.variables if v in keep]
        return np.transpose(m, [kept.index(v) for v in keep])


def _safe_div(num: np.ndarray, den: np.ndarray, flags: set) -> np.ndarray:
    zero = den <= 0
    if np.any(zero):
        flags.add("zero_probability_cell")
    return np.divide(num, den, out=np.zeros(np.broadcast(num, den).shape), where=~zero)


def adjustment_formula(joint: DiscreteJoint, t: str, y: str, adj: Sequence[str], flags: set | None = None) -> np.ndarray:
    """sum over a of [sum over t' of P(y | a, t') P(t')] P(a | t).

    Returns an array indexed [t, y].
    """
    flags = set() if flags is None else flags
    adj = list(adj)
    k = len(adj)
    p = joint.marginal(adj + [t, y])  # (..adj.., t, y)
    p_at = p.sum(axis=-1)
    p_t = p_at.reshape(-1, p_at.shape[-1]).sum(axis=0)
    p_y_at = _safe_div(p, p_at[..., None], flags)
    inner = np.tensordot(p_y_at, p_t, axes=([k], [0]))  # (..adj.., y)
    p_a_t = _safe_div(p_at, p_t, flags)  # (..adj.., t)
    axes = list(range(k))
    return np.tensordot(p_a_t, inner, axes=(axes, axes))


@dataclass(frozen=True)
class FrontdoorEvaluation:
    eq6: np.ndarray  # [t, y]
    eq7: np.ndarray
    flags: frozenset = field(default_factory=frozenset)

    def ate(self, which: str = "eq6") -> float:
        d = getattr(self, which)
        return expectation(d[1]) - expectation(d[0])


def eval_generalized_frontdoor_discrete(
    joint: DiscreteJoint,
    t: str,
    y: str,
    b: Sequence[str],
    z: Sequence[str],
    z_i: Sequence[str],
) -> FrontdoorEvaluation:
    """Exact adjustment over Z and over S = (B, Z_i)."""
    if not set(z_i) <= set(z):
        raise ValueError("z_i must be a subset of z")
    flags: set = set()
    d6 = adjustment_formula(joint, t, y, list(z), flags)
    d7 = adjustment_formula(joint, t, y, list(b) + list(z_i), flags)
    return FrontdoorEvaluation(d6, d7, frozenset(flags))


def eq3_discrete(joint: DiscreteJoint, t: str, z1, b, z2, y) -> np.ndarray:
    """Exact value of the two-stage estimand, indexed [t, y]."""
    z1, b, z2 = list(z1), list(b), list(z2)
    k1, kb, k2 = len(z1), len(b), len(z2)
    flags: set = set()
    p_z1 = joint.marginal(z1)
    p_z1t = joint.marginal(z1 + [t])
    p_t_z1 = _safe_div(p_z1t, p_z1[..., None], flags)  # (z1, t')
    p_z1z2ty = joint.marginal(z1 + z2 + [t, y])
    p_y_z1z2t = _safe_div(p_z1z2ty, p_z1z2ty.sum(axis=-1, keepdims=True), flags)
    # inner(z1, z2, y) = sum_t' P(y | z1, z2, t') P(t' | z1)
    pt = p_t_z1.reshape(p_t_z1.shape[:k1] + (1,) * k2 + p_t_z1.shape[-1:] + (1,))
    inner = (p_y_z1z2t * pt).sum(axis=k1 + k2)
    p_bz2 = joint.marginal(b + z2)
    p_b = joint.marginal(b)
    p_z2_b = _safe_div(p_bz2, p_b.reshape(p_b.shape + (1,) * k2), flags)  # (b, z2)
    p_tz1b = joint.marginal([t] + z1 + b)
    p_b_tz1 = _safe_div(p_tz1b, p_tz1b.reshape(p_tz1b.shape[: 1 + k1] + (-1,)).sum(-1).reshape(
        p_tz1b.shape[: 1 + k1] + (1,) * kb), flags)  # (t, z1, b)
    out = np.zeros((p_b_tz1.shape[0], inner.shape[-1]))
    for tv in range(p_b_tz1.shape[0]):
        # weight(z1, b, z2) = P(z2 | b) P(b | t, z1) P(z1)
        w = p_b_tz1[tv].reshape(p_b_tz1.shape[1:] + (1,) * k2) * p_z2_b.reshape((1,) * k1 + p_z2_b.shape)
        w = w * p_z1.reshape(p_z1.shape + (1,) * (kb + k2))
        w_z1z2 = w.sum(axis=tuple(range(k1, k1 + kb)))  # (z1, z2)
        out[tv] = np.tensordot(w_z1z2, inner, axes=(list(range(k1 + k2)), list(range(k1 + k2))))
    return out


def expectation(dist: np.ndarray) -> float:
    return float(np.arange(len(dist)) @ dist)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# random binary models over an SMCM ------------------------------------------------

@dataclass(frozen=True)
class DiscreteModel:
    """Binary SMCM: one binary latent per bidirected edge, a CPT per observed node.

    ``cpts[v]`` holds P(v = 1) indexed by the bits of (observed parents in
    sorted order, then incident latents in edge order).
    """

    graph: Smcm
    latent_edges: tuple[tuple[int, int], ...]
    latent_p: np.ndarray
    cpts: tuple[np.ndarray, ...]

    def _parent_lists(self):
        g = self.graph
        touch = {v: [] for v in range(g.n_nodes)}
        for k, (a, b) in enumerate(self.latent_edges):
            touch[a].append(k)
            touch[b].append(k)
        return [(tuple(sorted(g.parents(v))), tuple(touch[v])) for v in range(g.n_nodes)]

    def joint(self, do: Mapping[int, int] | None = None) -> DiscreteJoint:
        """Exact observed joint (or interventional law under ``do``) by
        enumerating every latent and observed configuration."""
        do = dict(do or {})
        g = self.graph
        p, n_lat = g.n_nodes, len(self.latent_edges)
        configs = np.array(list(itertools.product((0, 1), repeat=p + n_lat)), dtype=int)
        obs, lat = configs[:, :p], configs[:, p:]
        prob = np.ones(len(configs))
        for k in range(n_lat):
            prob *= np.where(lat[:, k] == 1, self.latent_p[k], 1.0 - self.latent_p[k])
        for v, (parents, lats) in enumerate(self._parent_lists()):
            if v in do:
                prob *= obs[:, v] == do[v]
                continue
            bits = np.column_stack([obs[:, list(parents)], lat[:, list(lats)]])
            idx = bits @ (1 << np.arange(bits.shape[1])[::-1]) if bits.shape[1] else np.zeros(len(obs), int)
            p1 = self.cpts[v][idx]
            prob *= np.where(obs[:, v] == 1, p1, 1.0 - p1)
        table = np.zeros((2,) * p)
        np.add.at(table, tuple(obs.T), prob)
        return DiscreteJoint(tuple(g.names), table / table.sum())

    def interventional(self, t_value: int) -> np.ndarray:
        """P(Y | do(T = t_value)) by brute force."""
        r = self.graph.roles
        j = self.joint({r.treatment: t_value})
        return j.marginal([self.graph.names[r.outcome]])


def random_discrete_model(g: Smcm, rng: np.random.Generator, low: float = 0.01, high: float = 0.99) -> DiscreteModel:
    latent_edges = tuple(sorted(g.bidirected_edges))
    latent_p = rng.uniform(low, high, len(latent_edges))
    cpts = []
    for v in range(g.n_nodes):
        k = len(g.parents(v)) + len(g.siblings(v))
        cpts.append(rng.uniform(low, high, 2**k))
    return DiscreteModel(g, latent_edges, latent_p, tuple(cpts))

"""Conditional independence tests: Fisher z, RCoT and stratified permutation.

All tests take a :class:`~frontdoor.data.DataTable` plus variable names, or raw
arrays through :func:`ci_arrays`. Columns are standardized first.
"""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .data import DataTable

KINDS = ("fisher_z", "rcot", "permutation")
MIN_ROWS = 30
RIDGE_FLOOR = 1e-10


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class CiMethod:
    kind: str = "rcot"
    n_features_xy: int = 5
    n_features_cond: int = 25
    n_permutations: int = 199
    stratum_size: int = 10
    bandwidth_rows: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.n_features_xy < 1 or self.n_features_cond < 1:
            raise ValueError("feature counts must be >= 1")
        if self.n_permutations < 1 or self.stratum_size < 2:
            raise ValueError("need >= 1 permutation and strata of >= 2 rows")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class CiResult:
    statistic: float
    p_value: float
    method: str
    n_used: int
    flags: tuple[str, ...] = field(default=())

    @property
    def degenerate(self) -> bool:
        return "degenerate" in self.flags


# public entry points ------------------------------------------------------

def test_ci(
    data: DataTable,
    x: Sequence[str],
    y: Sequence[str],
    cond: Sequence[str] = (),
    method: CiMethod | None = None,
) -> CiResult:
    """Test X independent of Y given cond; names are table variables."""
    x, y, cond = _as_names(x), _as_names(y), _as_names(cond)
    if set(x) & set(y) or set(x) & set(cond) or set(y) & set(cond):
        raise ValueError("x, y and cond must be disjoint")
    return ci_arrays(data.matrix(x), data.matrix(y), data.matrix(cond), method)


def test_ci_unconditional(data: DataTable, x, y, method: CiMethod | None = None) -> CiResult:
    return test_ci(data, x, y, (), method)


# keep pytest from collecting the public functions above
test_ci.__test__ = False
test_ci_unconditional.__test__ = False


def ci_arrays(x, y, cond=None, method: CiMethod | None = None) -> CiResult:
    method = method or CiMethod()
    x, y = _as_2d(x), _as_2d(y)
    n = x.shape[0]
    cond = np.zeros((n, 0)) if cond is None else _as_2d(cond)
    if y.shape[0] != n or cond.shape[0] != n:
        raise ValueError("row counts differ")
    if x.shape[1] == 0 or y.shape[1] == 0:
        return CiResult(0.0, 1.0, method.kind, n, ("vacuous",))
    if n < MIN_ROWS:
        raise InsufficientData(f"need at least {MIN_ROWS} rows, got {n}")

    flags: list[str] = []
    x, x_const = _standardize(x)
    y, y_const = _standardize(y)
    if x_const.any() or y_const.any():
        return CiResult(0.0, 1.0, method.kind, n, ("degenerate",))
    cond, c_const = _standardize(cond)
    if c_const.any():
        cond = cond[:, ~c_const]
        flags.append("constant_cond_dropped")

    if method.kind == "fisher_z":
        stat, p = _fisher_z(x, y, cond, flags)
    elif method.kind == "rcot":
        stat, p = _rcot(x, y, cond, method, flags)
    else:
        stat, p = _permutation(x, y, cond, method, flags)
    p = float(min(1.0, max(0.0, p)))
    return CiResult(float(stat), p, method.kind, n, tuple(flags))


# helpers ------------------------------------------------------------------

def _as_names(v) -> tuple[str, ...]:
    if isinstance(v, str):
        return (v,)
    return tuple(v)


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    return a


def _standardize(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = a.mean(axis=0)
    sd = a.std(axis=0)
    const = sd <= 1e-12 * np.maximum(1.0, np.abs(mu))
    out = (a - mu) / np.where(const, 1.0, sd)
    return out, const


def _residualize(a: np.ndarray, design: np.ndarray, flags: list[str]) -> np.ndarray:
    """Residuals of centered ``a`` on centered ``design`` (ridge floor if singular)."""
    if design.shape[1] == 0:
        return a - a.mean(axis=0)
    d = design - design.mean(axis=0)
    gram = d.T @ d
    rhs = d.T @ (a - a.mean(axis=0))
    try:
        cho = np.linalg.cholesky(gram)
        coef = np.linalg.solve(cho.T, np.linalg.solve(cho, rhs))
    except np.linalg.LinAlgError:
        if "ridge_floor" not in flags:
            flags.append("ridge_floor")
        scale = max(np.trace(gram) / gram.shape[0], 1.0)
        coef = np.linalg.solve(gram + RIDGE_FLOOR * scale * np.eye(gram.shape[0]), rhs)
    return a - a.mean(axis=0) - d @ coef


def _fisher_z(x, y, cond, flags) -> tuple[float, float]:
    n = x.shape[0]
    rx = _residualize(x, cond, flags)
    ry = _residualize(y, cond, flags)
    dof = n - cond.shape[1] - 3
    if dof < 1:
        raise InsufficientData("too few rows for the conditioning set")
    nx = np.linalg.norm(rx, axis=0)
    ny = np.linalg.norm(ry, axis=0)
    if np.any(nx < 1e-12) or np.any(ny < 1e-12):
        # a column fully explained by cond carries no information
        flags.append("degenerate")
        return 0.0, 1.0
    r = (rx / nx).T @ (ry / ny)
    r = np.clip(r, -1 + 1e-15, 1 - 1e-15)
    z = np.abs(np.arctanh(r)) * np.sqrt(dof)
    zmax = float(z.max())
    p_single = 2.0 * stats.norm.sf(zmax)
    return zmax, min(1.0, p_single * r.size)


_BANDWIDTH_CACHE: OrderedDict[bytes, float] = OrderedDict()
_BANDWIDTH_CACHE_SIZE = 4096


def _bandwidth(a: np.ndarray, max_rows: int) -> float:
    """Median pairwise distance; memoized since searches revisit the same blocks."""
    head = np.ascontiguousarray(a[:max_rows])
    key = hashlib.blake2b(head.tobytes(), digest_size=16).digest() + repr(head.shape).encode()
    hit = _BANDWIDTH_CACHE.get(key)
    if hit is not None:
        _BANDWIDTH_CACHE.move_to_end(key)
        return hit
    dist = pdist(head)
    dist = dist[dist > 0]
    value = float(np.median(dist)) if dist.size else 1.0
    _BANDWIDTH_CACHE[key] = value
    if len(_BANDWIDTH_CACHE) > _BANDWIDTH_CACHE_SIZE:
        _BANDWIDTH_CACHE.popitem(last=False)
    return value


def _fourier(a: np.ndarray, n_features: int, rng: np.random.Generator, max_rows: int) -> np.ndarray:
    sigma = _bandwidth(a, max_rows)
    w = rng.standard_normal((a.shape[1], n_features))
    b = rng.uniform(0.0, 2.0 * np.pi, n_features)
    feats = np.sqrt(2.0) * np.cos(a @ w / sigma + b)
    sd = feats.std(axis=0)
    return (feats - feats.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def _rcot(x, y, cond, method: CiMethod, flags) -> tuple[float, float]:
    n = x.shape[0]
    rng = np.random.default_rng(method.seed)
    fx = _fourier(x, method.n_features_xy, rng, method.bandwidth_rows)
    fy = _fourier(y, method.n_features_xy, rng, method.bandwidth_rows)
    if cond.shape[1]:
        fz = _fourier(cond, method.n_features_cond, rng, method.bandwidth_rows)
        gram = fz.T @ fz / n
        gram += RIDGE_FLOOR * np.eye(gram.shape[0])
        proj = np.linalg.solve(gram, fz.T @ np.column_stack([fx, fy]) / n)
        res = np.column_stack([fx, fy]) - fz @ proj
        rx, ry = res[:, : fx.shape[1]], res[:, fx.shape[1]:]
    else:
        rx, ry = fx, fy
    cxy = rx.T @ ry / n
    stat = n * float(np.sum(cxy**2))
    # null: weighted sum of chi-square(1) with weights = eigenvalues of cov(products)
    prod = (rx[:, :, None] * ry[:, None, :]).reshape(n, -1)
    prod = prod - prod.mean(axis=0)
    cov = prod.T @ prod / n
    mean = float(np.trace(cov))
    var = 2.0 * float(np.sum(cov**2))
    if mean <= 0 or var <= 0:
        flags.append("degenerate")
        return stat, 1.0
    shape = mean**2 / var
    scale = var / mean
    return stat, float(stats.gamma.sf(stat, shape, scale=scale))


def _strata(cond: np.ndarray, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Greedy nearest-neighbour groups of about ``size`` rows."""
    n = cond.shape[0]
    if cond.shape[1] == 0:
        return [np.arange(n)]
    tree = cKDTree(cond)
    free = np.ones(n, dtype=bool)
    groups = []
    for i in rng.permutation(n):
        if not free[i]:
            continue
        k = min(n, 4 * size)
        while True:
            _, idx = tree.query(cond[i], k=k)
            idx = np.atleast_1d(idx)
            idx = idx[free[idx]][:size]
            if idx.size == size or k == n:
                break
            k = min(n, 2 * k)
        free[idx] = False
        groups.append(idx)
    # fold a short trailing group into its neighbour's so every stratum can permute
    if len(groups) > 1 and groups[-1].size < 2:
        groups[-2] = np.concatenate([groups[-2], groups.pop()])
    return groups


def _linear_stat(rx: np.ndarray, ry: np.ndarray) -> float:
    nx = np.linalg.norm(rx, axis=0)
    ny = np.linalg.norm(ry, axis=0)
    r = (rx / np.where(nx > 0, nx, 1.0)).T @ (ry / np.where(ny > 0, ny, 1.0))
    return float(rx.shape[0] * np.sum(r**2))


def _permutation(x, y, cond, method: CiMethod, flags) -> tuple[float, float]:
    rng = np.random.default_rng(method.seed)
    ry = _residualize(y, cond, flags)
    rx = _residualize(x, cond, flags)
    stat = _linear_stat(rx, ry)
    groups = _strata(cond, method.stratum_size, rng)
    exceed = 0
    perm = np.arange(x.shape[0])
    for _ in range(method.n_permutations):
        for g in groups:
            perm[g] = rng.permutation(g)
        rxp = _residualize(x[perm], cond, flags)
        if _linear_stat(rxp, ry) >= stat:
            exceed += 1
    return stat, (1 + exceed) / (method.n_permutations + 1)

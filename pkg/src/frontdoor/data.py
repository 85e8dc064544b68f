"""Column-oriented sample tables and CSV ingestion with simple encodings."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)


class DataError(ValueError):
    pass


class DataTable:
    """Immutable numeric sample matrix.

    Each named *variable* maps to one or more derived columns (one-hot
    encodings expand a categorical variable into several columns). Most of
    the library addresses data by variable name.
    """

    __slots__ = ("columns", "_values", "groups", "provenance", "_col_index")

    def __init__(
        self,
        columns: Sequence[str],
        values,
        groups: Mapping[str, Sequence[str]] | None = None,
        provenance: Mapping[str, str] | None = None,
    ):
        values = np.array(values, dtype=float, order="F", copy=True)
        if values.ndim != 2 or values.shape[1] != len(columns):
            raise DataError("values must be a rows x columns matrix matching the column names")
        if len(set(columns)) != len(columns):
            raise DataError("duplicate column names")
        if not np.all(np.isfinite(values)):
            raise DataError("table contains missing or non-finite values")
        values.setflags(write=False)
        self.columns = tuple(columns)
        self._values = values
        self._col_index = {c: i for i, c in enumerate(self.columns)}
        if groups is None:
            groups = {c: (c,) for c in self.columns}
        groups = {k: tuple(v) for k, v in groups.items()}
        for var, cols in groups.items():
            missing = [c for c in cols if c not in self._col_index]
            if missing:
                raise DataError(f"variable {var!r} refers to unknown columns {missing}")
        self.groups = groups
        self.provenance = dict(provenance or {})

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "DataTable":
        cols = list(arrays)
        return cls(cols, np.column_stack([np.asarray(arrays[c], dtype=float) for c in cols]))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "DataTable":
        return cls([str(c) for c in frame.columns], frame.to_numpy(dtype=float))

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def n_rows(self) -> int:
        return self._values.shape[0]

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(self.groups)

    def __len__(self):
        return self.n_rows

    def column(self, name: str) -> np.ndarray:
        try:
            return self._values[:, self._col_index[name]]
        except KeyError:
            raise DataError(f"unknown column {name!r}") from None

    def columns_of(self, variables: Iterable[str]) -> list[str]:
        cols = []
        for v in variables:
            try:
                cols.extend(self.groups[v])
            except KeyError:
                raise DataError(f"unknown variable {v!r}") from None
        return cols

    def matrix(self, variables: Iterable[str]) -> np.ndarray:
        """Rows x derived-columns matrix for a set of variables."""
        idx = [self._col_index[c] for c in self.columns_of(variables)]
        return self._values[:, idx]

    def vector(self, variable: str) -> np.ndarray:
        cols = self.columns_of([variable])
        if len(cols) != 1:
            raise DataError(f"variable {variable!r} spans {len(cols)} columns")
        return self.column(cols[0])

    def take(self, rows) -> "DataTable":
        return DataTable(self.columns, self._values[np.asarray(rows)], self.groups, self.provenance)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self._values, columns=list(self.columns))

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g", lineterminator="\n")

    @classmethod
    def read_csv(cls, path) -> "DataTable":
        frame = pd.read_csv(path)
        return cls.from_frame(frame)


# audit manifests ----------------------------------------------------------

@dataclass
class TreatmentRule:
    column: str
    threshold: float | None = None
    positive: str | None = None

    def apply(self, series: pd.Series) -> np.ndarray:
        if self.threshold is not None:
            values = pd.to_numeric(series, errors="coerce")
            if values.isna().any():
                raise DataError(f"column {self.column!r} is not numeric; cannot threshold")
            return (values >= self.threshold).to_numpy(dtype=float)
        if self.positive is not None:
            return (series.astype(str) == str(self.positive)).to_numpy(dtype=float)
        values = pd.to_numeric(series, errors="coerce")
        uniq = set(values.dropna().unique())
        if values.isna().any() or not uniq <= {0.0, 1.0}:
            raise DataError(
                f"column {self.column!r} is not binary; give a threshold or a positive level"
            )
        return values.to_numpy(dtype=float)


@dataclass
class AuditManifest:
    """Role mapping for a real dataset.

    ``treatment``/``outcome`` may be a bare column name or a mapping with
    ``column`` plus an optional ``threshold`` (values >= threshold become 1)
    or ``positive`` level. A bare treatment must already be 0/1; a bare
    outcome is used as given.
    """

    csv_path: str
    treatment: TreatmentRule
    outcome: TreatmentRule
    children: list[str]
    categorical: list[str] = field(default_factory=list)
    drop: list[str] = field(default_factory=list)

    @classmethod
    def from_dict(cls, raw: Mapping, base_dir: Path | None = None) -> "AuditManifest":
        def rule(spec) -> TreatmentRule:
            if isinstance(spec, str):
                return TreatmentRule(spec)
            return TreatmentRule(spec["column"], spec.get("threshold"), spec.get("positive"))

        try:
            path = str(raw["csv_path"])
            if base_dir is not None and not Path(path).is_absolute():
                path = str(base_dir / path)
            m = cls(
                csv_path=path,
                treatment=rule(raw["treatment"]),
                outcome=rule(raw["outcome"]),
                children=list(raw["children"]),
                categorical=list(raw.get("categorical", [])),
                drop=list(raw.get("drop", [])),
            )
        except KeyError as exc:
            raise DataError(f"manifest is missing key {exc.args[0]!r}") from None
        m.validate()
        return m

    @classmethod
    def load(cls, path) -> "AuditManifest":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)

    def validate(self) -> None:
        t, y = self.treatment.column, self.outcome.column
        if t == y or t in self.children or y in self.children:
            raise DataError("treatment, outcome and children must be disjoint")
        if len(set(self.children)) != len(self.children):
            raise DataError("duplicate children")

    def to_dict(self) -> dict:
        def rule(r: TreatmentRule):
            out = {"column": r.column}
            if r.threshold is not None:
                out["threshold"] = r.threshold
            if r.positive is not None:
                out["positive"] = r.positive
            return out

        return {
            "csv_path": self.csv_path,
            "treatment": rule(self.treatment),
            "outcome": rule(self.outcome),
            "children": self.children,
            "categorical": self.categorical,
            "drop": self.drop,
        }


@dataclass
class Ingested:
    table: DataTable
    treatment: str
    outcome: str
    children: list[str]
    rows_dropped: int


def one_hot(series: pd.Series, name: str) -> tuple[list[str], np.ndarray, list[str]]:
    """Dummy-encode with the first (sorted) level dropped.

    Returns derived column names, the 0/1 matrix and the full level list.
    """
    levels = sorted(series.astype(str).unique())
    labels = series.astype(str).to_numpy()
    cols, mats = [], []
    for level in levels[1:]:
        cols.append(f"{name}={level}")
        mats.append((labels == level).astype(float))
    mat = np.column_stack(mats) if mats else np.zeros((len(series), 0))
    return cols, mat, levels


def decode_one_hot(matrix: np.ndarray, levels: Sequence[str]) -> list[str]:
    out = []
    for row in np.asarray(matrix):
        hits = np.flatnonzero(row > 0.5)
        out.append(levels[0] if hits.size == 0 else levels[hits[0] + 1])
    return out


def ingest(manifest: AuditManifest, frame: pd.DataFrame | None = None) -> Ingested:
    """Load the manifest's CSV, drop incomplete rows and encode roles."""
    if frame is None:
        frame = pd.read_csv(manifest.csv_path, skipinitialspace=True)
    frame = frame.copy()
    frame.columns = [str(c).strip() for c in frame.columns]
    named = [manifest.treatment.column, manifest.outcome.column, *manifest.children,
             *manifest.categorical, *manifest.drop]
    missing = [c for c in named if c not in frame.columns]
    if missing:
        raise DataError(f"columns not found in CSV: {missing}")
    frame = frame.drop(columns=manifest.drop)
    before = len(frame)
    frame = frame.replace({"?": np.nan}).dropna(axis=0, how="any").reset_index(drop=True)
    dropped = before - len(frame)
    if dropped:
        log.warning("dropped %d rows with missing values", dropped)

    t_name, y_name = manifest.treatment.column, manifest.outcome.column
    columns: list[str] = []
    mats: list[np.ndarray] = []
    groups: dict[str, tuple[str, ...]] = {}
    provenance: dict[str, str] = {}
    for col in frame.columns:
        series = frame[col]
        if col == t_name:
            derived, mat = [col], manifest.treatment.apply(series)[:, None]
            provenance[col] = _rule_text(manifest.treatment)
        elif col == y_name and manifest.outcome.threshold is None and manifest.outcome.positive is None:
            # a bare outcome column is used as given
            values = pd.to_numeric(series, errors="coerce")
            if values.isna().any():
                raise DataError(f"outcome column {col!r} is not numeric; give a positive level")
            derived, mat = [col], values.to_numpy(dtype=float)[:, None]
            provenance[col] = "numeric"
        elif col == y_name:
            derived, mat = [col], manifest.outcome.apply(series)[:, None]
            provenance[col] = _rule_text(manifest.outcome)
        elif col in manifest.categorical or not pd.api.types.is_numeric_dtype(series):
            derived, mat, levels = one_hot(series, col)
            for d in derived:
                provenance[d] = f"one-hot of {col} (levels {levels}, dropped {levels[0]!r})"
        else:
            derived, mat = [col], series.to_numpy(dtype=float)[:, None]
            provenance[col] = "numeric"
        if not derived:
            log.warning("variable %r has a single level and is skipped", col)
            continue
        columns.extend(derived)
        mats.append(mat)
        groups[col] = tuple(derived)
    t_vals = mats[list(groups).index(t_name)]
    if len(np.unique(t_vals)) < 2:
        raise DataError("treatment has a single group after binarization")
    table = DataTable(columns, np.column_stack(mats), groups, provenance)
    children = [c for c in manifest.children if c in groups]
    return Ingested(table, t_name, y_name, children, dropped)


def _rule_text(rule: TreatmentRule) -> str:
    if rule.threshold is not None:
        return f"binary: {rule.column} >= {rule.threshold}"
    if rule.positive is not None:
        return f"binary: {rule.column} == {rule.positive!r}"
    return "binary as given"

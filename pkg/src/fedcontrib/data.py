"""Tabular ingestion, imputation, normalization and party partitions."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

MISSING_TOKEN = "?"

# The 15 risk-factor attributes used for the Biopsy task, named as in the UCI
# header ("First sexual intercourse" carries no "(age)" suffix there).
CERVICAL_TARGET = "Biopsy"
CERVICAL_FEATURES = (
    "Age",
    "Number of sexual partners",
    "First sexual intercourse",
    "Num of pregnancies",
    "Smokes",
    "Smokes (years)",
    "Hormonal Contraceptives",
    "Hormonal Contraceptives (years)",
    "IUD",
    "IUD (years)",
    "STDs",
    "STDs (number)",
    "STDs: Number of diagnosis",
    "STDs: Time since first diagnosis",
    "STDs: Time since last diagnosis",
)


@dataclass
class RawTable:
    column_names: list[str]
    column_kinds: list[str]
    # NaN marks a missing cell.
    rows: np.ndarray
    target_column: str

    def __post_init__(self) -> None:
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.column_names):
            raise DataError("row width does not match column count")
        if len(self.column_kinds) != len(self.column_names):
            raise DataError("column_kinds length does not match column count")
        if self.target_column not in self.column_names:
            raise DataError(f"target column {self.target_column!r} not in table")

    @property
    def feature_names(self) -> list[str]:
        return [c for c in self.column_names if c != self.target_column]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.column_names.index(name)]


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    medians: np.ndarray
    # Per-feature affine map: normalized = (raw - offset) / scale.
    offsets: np.ndarray
    scales: np.ndarray

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2:
            raise DataError("features must be a 2-d matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise DataError("labels length must equal the number of rows")
        if len(self.feature_names) != self.features.shape[1]:
            raise DataError("feature_names length must equal the number of columns")
        if np.isnan(self.features).any():
            raise DataError("features contain missing values")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @classmethod
    def from_arrays(cls, features, labels, feature_names: Sequence[str] | None = None) -> "Dataset":
        """Wrap already-normalized arrays; medians are computed, no rescaling."""
        features = np.asarray(features, dtype=float)
        d = features.shape[1]
        names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(d)]
        return cls(
            features=features,
            labels=np.asarray(labels, dtype=int),
            feature_names=names,
            medians=np.array([lower_median(features[:, j]) for j in range(d)]),
            offsets=np.zeros(d),
            scales=np.ones(d),
        )

    def snapshot(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "medians": [float(m) for m in self.medians],
            "n": self.n,
            "d": self.d,
        }

    def to_json(self) -> str:
        return json.dumps(self.snapshot(), sort_keys=True)


@dataclass
class HorizontalPartition:
    assignments: list[np.ndarray]
    n: int = field(default=-1)

    def __post_init__(self) -> None:
        self.assignments = [np.asarray(a, dtype=int) for a in self.assignments]
        if not self.assignments:
            raise DataError("a partition needs at least one party")
        joined = np.concatenate(self.assignments) if self.assignments else np.array([], int)
        if len(np.unique(joined)) != len(joined):
            raise DataError("party instance sets overlap")
        if self.n >= 0 and joined.size and (joined.min() < 0 or joined.max() >= self.n):
            raise DataError("instance index out of range")

    @property
    def party_count(self) -> int:
        return len(self.assignments)

    def covers(self, n: int) -> bool:
        joined = np.sort(np.concatenate(self.assignments))
        return np.array_equal(joined, np.arange(n))


@dataclass
class VerticalPartition:
    feature_groups: list[np.ndarray]

    def __post_init__(self) -> None:
        self.feature_groups = [np.asarray(g, dtype=int) for g in self.feature_groups]
        if not self.feature_groups:
            raise DataError("a partition needs at least one party")
        if any(g.size == 0 for g in self.feature_groups):
            raise DataError("feature groups must be non-empty")
        joined = np.concatenate(self.feature_groups)
        if len(np.unique(joined)) != len(joined):
            raise DataError("feature groups overlap")

    @property
    def party_count(self) -> int:
        return len(self.feature_groups)

    def validate_for(self, d: int) -> None:
        joined = np.sort(np.concatenate(self.feature_groups))
        if not np.array_equal(joined, np.arange(d)):
            raise DataError(f"feature groups do not cover exactly 0..{d - 1}")


def _parse_cell(text: str, line_no: int, column: str) -> float:
    text = text.strip()
    if text == MISSING_TOKEN or text == "":
        return math.nan
    lowered = text.lower()
    if lowered in ("true", "false"):
        return 1.0 if lowered == "true" else 0.0
    try:
        return float(text)
    except ValueError:
        raise DataError(f"line {line_no}: non-numeric cell {text!r} in column {column!r}") from None


def _infer_kind(values: np.ndarray) -> str:
    present = values[~np.isnan(values)]
    if present.size and np.isin(present, (0.0, 1.0)).all():
        return "boolean"
    if np.all(present == np.round(present)):
        return "integer"
    return "real"


def _normalize_header(name: str) -> str:
    return " ".join(name.split()).lower()


def _cervical_columns(header: list[str]) -> list[str] | None:
    lookup = {_normalize_header(h): h for h in header}
    picked = [lookup.get(_normalize_header(c)) for c in CERVICAL_FEATURES]
    if all(picked):
        return picked  # type: ignore[return-value]
    return None


def load_csv(
    path: str | Path,
    target_column: str,
    feature_columns: Sequence[str] | None = None,
) -> RawTable:
    """Read a header-first CSV where ``?`` marks a missing cell.

    When ``feature_columns`` is None every non-target column is kept, except
    for the UCI cervical-cancer risk-factor file with target ``Biopsy``: there
    only the 15 risk-factor attributes are kept (the other screening results
    would leak the label).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or all(not h.strip() for h in header):
            raise DataError(f"{path}: no header")
        header = [h.strip() for h in header]
        if target_column not in header:
            raise DataError(f"{path}: target column {target_column!r} absent from header")

        if feature_columns is None:
            feature_columns = _cervical_columns(header) if target_column == CERVICAL_TARGET else None
            if feature_columns is None:
                feature_columns = [h for h in header if h != target_column]
        missing = [c for c in feature_columns if c not in header]
        if missing:
            raise DataError(f"{path}: columns absent from header: {missing}")
        keep = list(feature_columns) + [target_column]
        positions = [header.index(c) for c in keep]

        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {line_no} has {len(row)} cells, expected {len(header)}"
                )
            rows.append([_parse_cell(row[p], line_no, header[p]) for p in positions])

    matrix = np.array(rows, dtype=float).reshape(len(rows), len(keep))
    kinds = [_infer_kind(matrix[:, j]) for j in range(len(keep))]
    logger.info("loaded %d rows x %d columns from %s", matrix.shape[0], len(keep), path)
    return RawTable(column_names=keep, column_kinds=kinds, rows=matrix, target_column=target_column)


def midpoint_median(values: np.ndarray) -> float:
    return float(np.median(values))


def lower_median(values: np.ndarray) -> float:
    """Median that always returns an observed value (lower middle for even counts)."""
    ordered = np.sort(np.asarray(values, dtype=float))
    if ordered.size == 0:
        raise DataError("median of an empty column")
    return float(ordered[(ordered.size - 1) // 2])


def prepare(table: RawTable, target_column: str | None = None) -> Dataset:
    """Drop unlabeled rows, impute, min-max normalize and compute reference medians.

    Missing cells take the column median of the observed values. Constant
    columns normalize to 0. Reference medians are computed afterwards on the
    normalized matrix using :func:`lower_median`, so they are always values the
    model has seen.
    """
    target_column = target_column or table.target_column
    target = table.column(target_column)
    labeled = ~np.isnan(target)
    if not labeled.all():
        logger.info("dropping %d rows with missing target", int((~labeled).sum()))
    target = target[labeled]
    names = [c for c in table.column_names if c != target_column]
    idx = [table.column_names.index(c) for c in names]
    raw = table.rows[labeled][:, idx].copy()

    if not np.isin(target, (0.0, 1.0)).all():
        raise DataError("target must be boolean (0/1)")
    if np.unique(target).size < 2:
        raise DataError("target column is constant")

    for j, name in enumerate(names):
        col = raw[:, j]
        gaps = np.isnan(col)
        if gaps.all():
            raise DataError(f"feature {name!r} is entirely missing")
        if gaps.any():
            col[gaps] = midpoint_median(col[~gaps])

    offsets = raw.min(axis=0)
    spans = raw.max(axis=0) - offsets
    scales = np.where(spans > 0, spans, 1.0)
    features = (raw - offsets) / scales
    features[:, spans == 0] = 0.0
    medians = np.array([lower_median(features[:, j]) for j in range(features.shape[1])])
    return Dataset(
        features=features,
        labels=target.astype(int),
        feature_names=names,
        medians=medians,
        offsets=offsets,
        scales=scales,
    )


def to_raw_table(dataset: Dataset, target_column: str = "target") -> RawTable:
    """Rebuild a RawTable from a Dataset (normalized values, nothing missing)."""
    rows = np.column_stack([dataset.features, dataset.labels.astype(float)])
    names = list(dataset.feature_names) + [target_column]
    kinds = [_infer_kind(rows[:, j]) for j in range(rows.shape[1])]
    return RawTable(column_names=names, column_kinds=kinds, rows=rows, target_column=target_column)


def horizontal_split(dataset: Dataset, k: int, seed: int) -> HorizontalPartition:
    if k <= 0:
        raise DataError("party count must be positive")
    if k > dataset.n:
        raise DataError(f"cannot split {dataset.n} instances among {k} parties")
    order = np.random.default_rng(seed).permutation(dataset.n)
    return HorizontalPartition([np.sort(order[p::k]) for p in range(k)], n=dataset.n)


def vertical_split(dataset: Dataset, g: int) -> VerticalPartition:
    if g <= 0:
        raise DataError("party count must be positive")
    if g > dataset.d:
        raise DataError(f"cannot split {dataset.d} features among {g} parties")
    return VerticalPartition(np.array_split(np.arange(dataset.d), g))


def train_test_split(n: int, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle, first ``train_fraction`` of the order is the training set."""
    order = np.random.default_rng(seed).permutation(n)
    cut = int(round(train_fraction * n))
    return np.sort(order[:cut]), np.sort(order[cut:])

"""Tabular data handling: schemas, CSV ingestion, splits, hashing, standardization."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MISSING_TOKEN = "__MISSING__"

NUMERIC = "numeric"
CATEGORICAL = "categorical"
FILL_ZERO = "fill_zero"
FILL_MEAN = "fill_mean"

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class DataError(ValueError):
    """Raised for malformed data files or contract violations on datasets."""


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str = NUMERIC
    missing_policy: str = FILL_ZERO

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.missing_policy not in (FILL_ZERO, FILL_MEAN):
            raise DataError(f"column {self.name!r}: unknown missing_policy {self.missing_policy!r}")


def check_schema(schema: Sequence[ColumnSchema]) -> None:
    seen = set()
    for col in schema:
        if col.name in seen:
            raise DataError(f"duplicate column {col.name!r} in schema")
        seen.add(col.name)


def load_schema(path) -> list[ColumnSchema]:
    """Read a schema sidecar: a JSON object mapping column name to kind/policy.

    Values may be a bare kind string (``"numeric"``) or an object with
    ``kind`` and optional ``missing_policy``.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise DataError(f"{path}: schema must be a JSON object")
    schema = []
    for name, spec in doc.items():
        if isinstance(spec, str):
            schema.append(ColumnSchema(name, spec))
        else:
            schema.append(ColumnSchema(name, spec.get("kind", NUMERIC),
                                       spec.get("missing_policy", FILL_ZERO)))
    check_schema(schema)
    return schema


def save_schema(schema: Sequence[ColumnSchema], path) -> None:
    doc = {c.name: {"kind": c.kind, "missing_policy": c.missing_policy} for c in schema}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


@dataclass
class Dataset:
    """Columnar table of numeric and categorical columns with binary labels."""

    schema: list[ColumnSchema]
    numeric_values: dict[str, np.ndarray] = field(default_factory=dict)
    categorical_values: dict[str, np.ndarray] = field(default_factory=dict)
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        check_schema(self.schema)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = len(self.labels)
        for col in self.schema:
            store = self.numeric_values if col.kind == NUMERIC else self.categorical_values
            if col.name not in store:
                raise DataError(f"column {col.name!r} declared in schema but missing from data")
            if col.kind == NUMERIC:
                arr = np.asarray(store[col.name], dtype=np.float64)
                if np.isnan(arr).any():
                    raise DataError(f"column {col.name!r} contains NaN")
            else:
                arr = np.asarray(store[col.name], dtype=object)
            if len(arr) != n:
                raise DataError(f"column {col.name!r} has {len(arr)} rows, labels have {n}")
            store[col.name] = arr
        if n and not np.isin(self.labels, (0, 1)).all():
            raise DataError("invalid label: labels must be 0 or 1")

    @property
    def rows(self) -> int:
        return len(self.labels)

    def __len__(self):
        return self.rows

    @property
    def numeric_columns(self) -> list[str]:
        return [c.name for c in self.schema if c.kind == NUMERIC]

    @property
    def categorical_columns(self) -> list[str]:
        return [c.name for c in self.schema if c.kind == CATEGORICAL]

    def column(self, name: str) -> np.ndarray:
        if name in self.numeric_values:
            return self.numeric_values[name]
        if name in self.categorical_values:
            return self.categorical_values[name]
        raise KeyError(name)

    def numeric_matrix(self, columns: Iterable[str] | None = None) -> np.ndarray:
        cols = list(self.numeric_columns if columns is None else columns)
        if not cols:
            return np.zeros((self.rows, 0))
        return np.column_stack([self.numeric_values[c] for c in cols])

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            schema=list(self.schema),
            numeric_values={k: v[index] for k, v in self.numeric_values.items()},
            categorical_values={k: v[index] for k, v in self.categorical_values.items()},
            labels=self.labels[index],
        )

    def row(self, i: int) -> dict:
        """Single record as a column-name -> value mapping."""
        out = {}
        for col in self.schema:
            v = self.column(col.name)[i]
            out[col.name] = float(v) if col.kind == NUMERIC else str(v)
        return out


def _parse_label(text: str, lineno: int) -> int:
    t = text.strip()
    try:
        v = float(t)
    except ValueError:
        raise DataError(f"invalid label {text!r} at row {lineno}") from None
    if v not in (0.0, 1.0):
        raise DataError(f"invalid label {text!r} at row {lineno}")
    return int(v)


def load_csv(path, schema: Sequence[ColumnSchema], label_column: str) -> Dataset:
    """Load a comma-separated UTF-8 file with a header row.

    Empty numeric cells are filled per the column's missing policy; empty
    categorical cells become ``MISSING_TOKEN``. Row order is preserved.
    """
    schema = list(schema)
    check_schema(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        records = list(reader)

    position = {name: i for i, name in enumerate(header)}
    for col in schema:
        if col.name not in position:
            raise DataError(f"{path}: unknown column {col.name!r} in schema (not in header)")
    if label_column not in position:
        raise DataError(f"{path}: label column {label_column!r} not in header")

    labels = np.empty(len(records), dtype=np.int64)
    raw_numeric = {c.name: np.empty(len(records)) for c in schema if c.kind == NUMERIC}
    categorical = {c.name: np.empty(len(records), dtype=object) for c in schema if c.kind == CATEGORICAL}
    missing = {name: [] for name in raw_numeric}

    for r, rec in enumerate(records):
        lineno = r + 2  # 1-based, header is line 1
        if len(rec) != len(header):
            raise DataError(f"{path}: row {lineno} has {len(rec)} fields, expected {len(header)}")
        labels[r] = _parse_label(rec[position[label_column]], lineno)
        for col in schema:
            cell = rec[position[col.name]]
            if col.kind == NUMERIC:
                if cell.strip() == "":
                    missing[col.name].append(r)
                    raw_numeric[col.name][r] = 0.0
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: unparseable numeric cell {cell!r} at row {lineno}, column {col.name!r}"
                    ) from None
                if math.isnan(v):
                    missing[col.name].append(r)
                    v = 0.0
                raw_numeric[col.name][r] = v
            else:
                categorical[col.name][r] = cell if cell != "" else MISSING_TOKEN

    for col in schema:
        if col.kind != NUMERIC or not missing[col.name]:
            continue
        if col.missing_policy == FILL_MEAN:
            present = np.ones(len(records), dtype=bool)
            present[missing[col.name]] = False
            fill = float(raw_numeric[col.name][present].mean()) if present.any() else 0.0
            raw_numeric[col.name][missing[col.name]] = fill

    return Dataset(schema=schema, numeric_values=raw_numeric,
                   categorical_values=categorical, labels=labels)


def write_csv(ds: Dataset, path, label_column: str = "label") -> None:
    """Write ``ds`` so that ``load_csv`` with the same schema reproduces it exactly."""
    names = [c.name for c in ds.schema]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + [label_column])
        for i in range(ds.rows):
            rec = []
            for col in ds.schema:
                v = ds.column(col.name)[i]
                rec.append(repr(float(v)) if col.kind == NUMERIC else str(v))
            rec.append(str(int(ds.labels[i])))
            writer.writerow(rec)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    valid_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_fraction, self.valid_fraction, self.test_fraction)
        if any(not (0.0 < f < 1.0) for f in fr):
            raise DataError("split fractions must lie in (0, 1)")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise DataError("fractions must sum to 1")


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded shuffle followed by a train/valid/test partition.

    Valid and test sizes are ``floor(fraction * rows)``; the remainder goes to train.
    """
    n = ds.rows
    if n < 3:
        raise DataError(f"need at least 3 rows to split, got {n}")
    n_valid = int(math.floor(spec.valid_fraction * n))
    n_test = int(math.floor(spec.test_fraction * n))
    n_train = n - n_valid - n_test
    if min(n_train, n_valid, n_test) <= 0:
        raise DataError(f"split of {n} rows yields an empty partition ({n_train}, {n_valid}, {n_test})")
    perm = np.random.default_rng(spec.seed).permutation(n)
    return (ds.subset(perm[:n_train]),
            ds.subset(perm[n_train:n_train + n_valid]),
            ds.subset(perm[n_train + n_valid:]))


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def hash_category(value: str, bits: int) -> int:
    """Slot of ``value`` in a table of ``2**bits`` entries (FNV-1a 64, low bits)."""
    if not 1 <= bits <= 30:
        raise ValueError(f"bits must be in [1, 30], got {bits}")
    return fnv1a_64(str(value).encode("utf-8")) & ((1 << bits) - 1)


def fit_standardizer(column) -> tuple[float, float]:
    """Mean and population standard deviation; the scale falls back to 1.0 when ~0."""
    col = np.asarray(column, dtype=np.float64)
    if col.size == 0:
        raise ValueError("cannot standardize an empty column")
    mean = float(col.mean())
    scale = float(np.sqrt(np.mean((col - mean) ** 2)))
    if scale < 1e-12:
        scale = 1.0
    return mean, scale

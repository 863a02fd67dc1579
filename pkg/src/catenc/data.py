"""Columnar dataset model, CSV ingestion against a declared schema, and
train/validation splitting.

Categorical columns are stored as dense ``int32`` codes assigned in
first-appearance order together with the code -> label dictionary. Numeric
columns are ``float64`` with ``NaN`` for missing cells. The target is a
binary ``int8`` array.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyInputError, ParseError, SchemaError, SplitError

MISSING_LABEL = "⟨missing⟩"

CATEGORICAL = "categorical"
NUMERIC = "numeric"
TARGET = "target"
_KINDS = (CATEGORICAL, NUMERIC, TARGET)


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")


def validate_schema(schema: Sequence[ColumnSchema]) -> tuple[ColumnSchema, ...]:
    schema = tuple(schema)
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise SchemaError(f"duplicate column names in schema: {names}")
    n_target = sum(c.kind == TARGET for c in schema)
    if n_target != 1:
        raise SchemaError(f"schema needs exactly one target column, found {n_target}")
    return schema


def parse_schema(text: str) -> tuple[ColumnSchema, ...]:
    """Parse a sidecar schema: one ``name:kind`` per line, ``#`` comments allowed."""
    cols = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, kind = line.rpartition(":")
        if not sep or not name.strip():
            raise SchemaError(f"schema line {lineno}: expected 'name:kind', got {raw!r}")
        cols.append(ColumnSchema(name.strip(), kind.strip()))
    return validate_schema(cols)


def read_schema(path) -> tuple[ColumnSchema, ...]:
    return parse_schema(Path(path).read_text(encoding="utf-8"))


def format_schema(schema: Sequence[ColumnSchema]) -> str:
    return "".join(f"{c.name}:{c.kind}\n" for c in schema)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CategoricalColumn:
    codes: np.ndarray
    labels: tuple[str, ...]

    @property
    def n_categories(self) -> int:
        return len(self.labels)

    def code_of(self, label: str) -> int | None:
        try:
            return self.labels.index(label)
        except ValueError:
            return None

    def decode(self) -> list[str]:
        labels = self.labels
        return [labels[c] for c in self.codes]


def encode_labels(values: Iterable[str]) -> CategoricalColumn:
    """Assign dense codes in first-appearance order."""
    index: dict[str, int] = {}
    codes = []
    for v in values:
        c = index.get(v)
        if c is None:
            c = index[v] = len(index)
        codes.append(c)
    return CategoricalColumn(_frozen(np.asarray(codes, dtype=np.int32)), tuple(index))


@dataclass(frozen=True)
class Dataset:
    """Immutable columnar table. Build it with :meth:`from_columns`."""

    schema: tuple[ColumnSchema, ...]
    n_rows: int
    categorical: dict[str, CategoricalColumn] = field(repr=False)
    numeric: dict[str, np.ndarray] = field(repr=False)
    target: np.ndarray = field(repr=False)

    @classmethod
    def from_columns(cls, schema, categorical, numeric, target) -> "Dataset":
        schema = validate_schema(schema)
        target = np.asarray(target)
        n = len(target)
        cats: dict[str, CategoricalColumn] = {}
        nums: dict[str, np.ndarray] = {}
        for col in schema:
            if col.kind == CATEGORICAL:
                if col.name not in categorical:
                    raise SchemaError(f"missing categorical column {col.name!r}")
                c = categorical[col.name]
                if not isinstance(c, CategoricalColumn):
                    c = encode_labels(c)
                codes = np.asarray(c.codes, dtype=np.int32)
                if len(codes) != n:
                    raise SchemaError(f"column {col.name!r} has {len(codes)} rows, expected {n}")
                if n and (codes.min() < 0 or codes.max() >= len(c.labels)):
                    raise SchemaError(f"column {col.name!r} has codes outside its dictionary")
                cats[col.name] = CategoricalColumn(_frozen(codes.copy()), tuple(c.labels))
            elif col.kind == NUMERIC:
                if col.name not in numeric:
                    raise SchemaError(f"missing numeric column {col.name!r}")
                v = np.array(numeric[col.name], dtype=np.float64)
                if len(v) != n:
                    raise SchemaError(f"column {col.name!r} has {len(v)} rows, expected {n}")
                nums[col.name] = _frozen(v)
        y = np.asarray(target, dtype=np.int8)
        if not np.array_equal(y, target) or not np.all((y == 0) | (y == 1)):
            raise SchemaError("target must contain only 0 and 1")
        return cls(schema, n, cats, nums, _frozen(y.copy()))

    @property
    def target_name(self) -> str:
        return next(c.name for c in self.schema if c.kind == TARGET)

    @property
    def categorical_names(self) -> list[str]:
        return [c.name for c in self.schema if c.kind == CATEGORICAL]

    @property
    def numeric_names(self) -> list[str]:
        return [c.name for c in self.schema if c.kind == NUMERIC]

    def take(self, rows) -> "Dataset":
        """Row subset sharing the category dictionaries."""
        rows = np.asarray(rows, dtype=np.intp)
        cats = {k: CategoricalColumn(_frozen(v.codes[rows]), v.labels) for k, v in self.categorical.items()}
        nums = {k: _frozen(v[rows]) for k, v in self.numeric.items()}
        return Dataset(self.schema, len(rows), cats, nums, _frozen(self.target[rows]))

    def with_target(self, target) -> "Dataset":
        return Dataset.from_columns(self.schema, self.categorical, self.numeric, target)

    def dictionaries_json(self) -> str:
        return json.dumps({k: list(v.labels) for k, v in self.categorical.items()},
                          ensure_ascii=False, sort_keys=True)

    def equals(self, other: "Dataset") -> bool:
        if self.schema != other.schema or self.n_rows != other.n_rows:
            return False
        if not np.array_equal(self.target, other.target):
            return False
        for k, v in self.categorical.items():
            o = other.categorical[k]
            if v.labels != o.labels or not np.array_equal(v.codes, o.codes):
                return False
        return all(np.array_equal(v, other.numeric[k], equal_nan=True) for k, v in self.numeric.items())


def _parse_float(cell: str, missing: str, row: int, name: str) -> float:
    if cell == missing:
        return math.nan
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"column {name!r}: cannot parse {cell!r} as a number", row) from None


def load_csv(path, schema, delimiter: str = ",", header: bool = True, missing: str = "") -> Dataset:
    """Load a CSV file against ``schema`` in one pass.

    Columns present in the file but not in the schema are ignored. Row
    indices in errors are 0-based data rows (the header is not counted).
    """
    schema = validate_schema(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        if header:
            try:
                head = next(reader)
            except StopIteration:
                raise EmptyInputError(f"{path}: empty file") from None
            pos = {name: i for i, name in enumerate(head)}
            absent = [c.name for c in schema if c.name not in pos]
            if absent:
                raise SchemaError(f"{path}: header lacks declared column(s) {absent}")
            idx = [pos[c.name] for c in schema]
        else:
            idx = list(range(len(schema)))

        width = max(idx) + 1
        cat_vals = {c.name: [] for c in schema if c.kind == CATEGORICAL}
        num_vals = {c.name: [] for c in schema if c.kind == NUMERIC}
        target = []
        for r, rec in enumerate(reader):
            if not rec:
                continue
            if len(rec) < width:
                raise ParseError(f"expected at least {width} fields, got {len(rec)}", r)
            for col, i in zip(schema, idx):
                cell = rec[i]
                if col.kind == CATEGORICAL:
                    cat_vals[col.name].append(MISSING_LABEL if cell == missing else cell)
                elif col.kind == NUMERIC:
                    num_vals[col.name].append(_parse_float(cell, missing, r, col.name))
                else:
                    s = cell.strip()
                    if s not in ("0", "1"):
                        raise ParseError(f"target {col.name!r}: expected 0 or 1, got {cell!r}", r)
                    target.append(s == "1")
    if not target:
        raise EmptyInputError(f"{path}: no data rows")
    cats = {k: encode_labels(v) for k, v in cat_vals.items()}
    return Dataset.from_columns(schema, cats, num_vals, np.asarray(target, dtype=np.int8))


def write_csv(ds: Dataset, path, delimiter: str = ",", header: bool = True, missing: str = "") -> None:
    """Emit ``ds`` so that :func:`load_csv` reproduces it exactly. ``path`` may be an open text stream."""
    cols = []
    for c in ds.schema:
        if c.kind == CATEGORICAL:
            col = ds.categorical[c.name]
            labels = [missing if lab == MISSING_LABEL else lab for lab in col.labels]
            cols.append([labels[k] for k in col.codes.tolist()])
        elif c.kind == NUMERIC:
            cols.append([missing if math.isnan(v) else repr(v) for v in ds.numeric[c.name].tolist()])
        else:
            cols.append([str(v) for v in ds.target.tolist()])
    if hasattr(path, "write"):
        _write_rows(path, ds, cols, delimiter, header)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write_rows(fh, ds, cols, delimiter, header)


def _write_rows(fh, ds, cols, delimiter, header):
    w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
    if header:
        w.writerow([c.name for c in ds.schema])
    w.writerows(zip(*cols))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 2 / 3
    mode: str = "sequential"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise SplitError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.mode not in ("sequential", "shuffled"):
            raise SplitError(f"unknown split mode {self.mode!r}")

    def n_train(self, n_rows: int) -> int:
        return int(math.floor(self.train_fraction * n_rows + 0.5))


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    n_train = spec.n_train(ds.n_rows)
    if n_train < 1 or n_train >= ds.n_rows:
        raise SplitError(f"fraction {spec.train_fraction} leaves an empty side on {ds.n_rows} rows")
    order = np.arange(ds.n_rows)
    if spec.mode == "shuffled":
        order = np.random.default_rng(spec.seed).permutation(ds.n_rows)
    return ds.take(order[:n_train]), ds.take(order[n_train:])

"""Typed tabular data: schema parsing, CSV ingestion, ordinal transforms."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field

import numpy as np

BINARY_SYMMETRIC = "binary-symmetric"
BINARY_ASYMMETRIC = "binary-asymmetric"
NOMINAL = "nominal"
ORDINAL = "ordinal"
NUMERIC = "numeric"

KINDS = (BINARY_SYMMETRIC, BINARY_ASYMMETRIC, NOMINAL, ORDINAL, NUMERIC)
CATEGORICAL_KINDS = (BINARY_SYMMETRIC, BINARY_ASYMMETRIC, NOMINAL, ORDINAL)

MISSING_TOKENS = ("", "NA")


class SchemaError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnSchema:
    """One declared column.

    For ``binary-asymmetric`` the second level is the "presence" state.
    """

    name: str
    kind: str
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if not self.name:
            raise SchemaError("column name must be non-empty")
        if self.kind not in KINDS:
            raise SchemaError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind == NUMERIC:
            if self.levels:
                raise SchemaError(f"{self.name}: numeric column cannot declare levels")
            return
        if any(not lv for lv in self.levels):
            raise SchemaError(f"{self.name}: empty level label")
        if len(set(self.levels)) != len(self.levels):
            raise SchemaError(f"{self.name}: duplicate level labels")
        if self.kind in (BINARY_SYMMETRIC, BINARY_ASYMMETRIC) and len(self.levels) != 2:
            raise SchemaError(f"{self.name}: binary kinds need exactly 2 levels")
        if self.kind in (NOMINAL, ORDINAL) and len(self.levels) < 1:
            raise SchemaError(f"{self.name}: {self.kind} column needs levels")

    @property
    def is_categorical(self) -> bool:
        return self.kind in CATEGORICAL_KINDS


@dataclass(frozen=True)
class DataTable:
    """Immutable table of typed observations.

    ``values`` is an ``(n, p)`` float array: categorical cells hold the
    0-based level index, numeric cells the value, missing cells NaN.
    """

    schema: tuple[ColumnSchema, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        schema = tuple(self.schema)
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2 or values.shape[1] != len(schema):
            raise DataError("values must be an (n, p) array matching the schema")
        for t, col in enumerate(schema):
            if col.is_categorical:
                v = values[:, t]
                v = v[~np.isnan(v)]
                bad = (v != np.round(v)) | (v < 0) | (v >= len(col.levels))
                if bad.any():
                    raise DataError(f"{col.name}: category index out of declared levels")
        values.setflags(write=False)
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def column_index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def column(self, name_or_index) -> np.ndarray:
        t = name_or_index if isinstance(name_or_index, int) else self.column_index(name_or_index)
        return self.values[:, t]

    def take(self, rows) -> "DataTable":
        return DataTable(self.schema, self.values[np.asarray(rows)])

    def select(self, names) -> "DataTable":
        idx = [self.column_index(nm) for nm in names]
        return DataTable(tuple(self.schema[t] for t in idx), self.values[:, idx])

    def labels(self, t: int) -> list[str | None]:
        """Cells of column ``t`` decoded back to their text form."""
        col = self.schema[t]
        out = []
        for v in self.values[:, t]:
            if np.isnan(v):
                out.append(None)
            elif col.is_categorical:
                out.append(col.levels[int(v)])
            else:
                out.append(repr(float(v)))
        return out


# --------------------------------------------------------------------------
# Schema files
# --------------------------------------------------------------------------

_SCHEMA_LINE = re.compile(r"^\s*([^=\s]+)\s*=\s*([\w-]+)\s*(?:\[\s*levels\s*:\s*(.*?)\s*\])?\s*$")


def parse_schema(text: str) -> list[ColumnSchema]:
    """Parse ``name = kind [levels: a < b < c]`` lines.

    Ordinal levels are separated by ``<``, other kinds by commas.
    Blank lines and ``#`` comments are skipped.
    """
    cols = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SCHEMA_LINE.match(line)
        if m is None:
            raise SchemaError(f"schema line {lineno}: cannot parse {raw!r}")
        name, kind, levels_txt = m.groups()
        levels: tuple[str, ...] = ()
        if levels_txt is not None:
            sep = "<" if kind == ORDINAL else ","
            levels = tuple(s.strip() for s in levels_txt.split(sep))
        cols.append(ColumnSchema(name, kind, levels))
    if not cols:
        raise SchemaError("schema declares no columns")
    names = [c.name for c in cols]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate column names in schema")
    return cols


def format_schema(schema) -> str:
    lines = []
    for col in schema:
        if col.kind == NUMERIC:
            lines.append(f"{col.name} = {col.kind}")
        else:
            sep = " < " if col.kind == ORDINAL else ", "
            lines.append(f"{col.name} = {col.kind} [levels: {sep.join(col.levels)}]")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------

def load_table(csv_text: str, schema) -> DataTable:
    """Read CSV text into a :class:`DataTable` typed by ``schema``.

    Empty fields and the literal ``NA`` are missing. Rows whose cells are all
    missing are rejected (their 1-based data row index is in the message).
    """
    schema = tuple(schema)
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty CSV input") from None
    expected = [c.name for c in schema]
    if header != expected:
        raise SchemaError(f"header {header} does not match schema {expected}")

    lookups = [{lv: k for k, lv in enumerate(c.levels)} for c in schema]
    rows = []
    for r, record in enumerate(reader, start=1):
        if not record:
            continue
        if len(record) != len(schema):
            raise DataError(f"row {r}: expected {len(schema)} fields, got {len(record)}")
        row = []
        for col, lookup, cell in zip(schema, lookups, record):
            cell = cell.strip()
            if cell in MISSING_TOKENS:
                row.append(np.nan)
            elif col.is_categorical:
                if cell not in lookup:
                    raise DataError(f"row {r}: unknown category {cell!r} for {col.name}")
                row.append(float(lookup[cell]))
            else:
                try:
                    row.append(float(cell))
                except ValueError:
                    raise DataError(f"row {r}: cannot parse {cell!r} as a number for {col.name}") from None
                if not np.isfinite(row[-1]):
                    raise DataError(f"row {r}: non-finite value for {col.name}")
        if all(np.isnan(row)):
            raise DataError(f"row {r}: all values missing")
        rows.append(row)
    values = np.array(rows, dtype=float).reshape(len(rows), len(schema))
    return DataTable(schema, values)


def to_csv(table: DataTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.names)
    cols = [table.labels(t) for t in range(table.p)]
    for i in range(table.n):
        writer.writerow(["" if c[i] is None else c[i] for c in cols])
    return buf.getvalue()


# --------------------------------------------------------------------------
# Column statistics and ordinal treatments
# --------------------------------------------------------------------------

def _observed(x: np.ndarray) -> np.ndarray:
    return x[~np.isnan(x)]


def column_range(table: DataTable, t: int) -> float:
    obs = _observed(table.values[:, t])
    if obs.size == 0:
        raise DataError(f"{table.schema[t].name}: range undefined, all values missing")
    return float(obs.max() - obs.min())


def _check_ordinal(table: DataTable, t: int):
    if table.schema[t].kind != ORDINAL:
        raise DataError(f"{table.schema[t].name} is not ordinal")


def kr_transform(table: DataTable, t: int, declared_levels: bool = False) -> np.ndarray:
    """Map ordinal positions to ``(o - 1) / (max(o) - 1)``.

    ``max(o)`` is the largest observed position unless ``declared_levels``,
    in which case it is the number of declared levels. Missing stays NaN.
    """
    _check_ordinal(table, t)
    col = table.schema[t]
    if len(col.levels) < 2:
        raise DataError(f"{col.name}: ordinal transform needs at least 2 declared levels")
    pos = table.values[:, t] + 1.0
    obs = _observed(pos)
    if np.unique(obs).size < 2:
        raise DataError(f"{col.name}: fewer than 2 distinct observed levels, transform undefined")
    top = float(len(col.levels)) if declared_levels else float(obs.max())
    return (pos - 1.0) / (top - 1.0)


def podani_ranks(table: DataTable, t: int) -> np.ndarray:
    """Average ranks of the ordinal categories over non-missing cells."""
    _check_ordinal(table, t)
    x = table.values[:, t]
    ok = ~np.isnan(x)
    if not ok.any():
        raise DataError(f"{table.schema[t].name}: no observed values to rank")
    out = np.full(x.shape, np.nan)
    from .correlation import average_ranks

    out[ok] = average_ranks(x[ok])
    return out


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------

@dataclass
class ValidationReport:
    n: int
    missing_rates: dict[str, float]
    zero_range: list[str]
    single_level: list[str]
    all_missing_rows: list[int]

    @property
    def fatal(self) -> bool:
        return bool(self.all_missing_rows)

    @property
    def warnings(self) -> list[str]:
        out = [f"{nm}: zero range" for nm in self.zero_range]
        out += [f"{nm}: single observed level" for nm in self.single_level]
        out += [f"{nm}: all values missing" for nm, r in self.missing_rates.items() if r == 1.0]
        return out

    @property
    def clean(self) -> bool:
        return not self.fatal and not self.warnings

    def format(self) -> str:
        lines = [f"units: {self.n}"]
        for nm, rate in self.missing_rates.items():
            lines.append(f"missing rate {nm}: {rate:.4f}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        for r in self.all_missing_rows:
            lines.append(f"error: row {r}: all values missing")
        lines.append("status: " + ("fatal" if self.fatal else "clean" if self.clean else "warnings"))
        return "\n".join(lines) + "\n"


def validate(table: DataTable) -> ValidationReport:
    miss = table.missing
    rates = {c.name: float(miss[:, t].mean()) if table.n else 0.0 for t, c in enumerate(table.schema)}
    zero_range, single_level = [], []
    for t, col in enumerate(table.schema):
        obs = _observed(table.values[:, t])
        if obs.size == 0:
            continue
        if col.kind == NUMERIC:
            if obs.max() == obs.min():
                zero_range.append(col.name)
        elif np.unique(obs).size < 2:
            single_level.append(col.name)
    all_missing = [int(i) + 1 for i in np.flatnonzero(miss.all(axis=1))] if table.p else []
    return ValidationReport(table.n, rates, zero_range, single_level, all_missing)

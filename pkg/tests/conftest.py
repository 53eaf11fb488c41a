import math

import numpy as np
import pytest

from gowerweights.dataset import (
    BINARY_ASYMMETRIC,
    BINARY_SYMMETRIC,
    NOMINAL,
    NUMERIC,
    ORDINAL,
    ColumnSchema,
    DataTable,
)

KIND_CYCLE = (NUMERIC, BINARY_SYMMETRIC, BINARY_ASYMMETRIC, NOMINAL, ORDINAL)


def random_table(rng, n, p, missing=0.1, kinds=None):
    """Mixed-kind table; every column keeps at least two observed distinct values."""
    kinds = kinds or [KIND_CYCLE[rng.integers(len(KIND_CYCLE))] for _ in range(p)]
    schema, cols = [], []
    for t, kind in enumerate(kinds):
        if kind == NUMERIC:
            schema.append(ColumnSchema(f"x{t}", kind))
            col = np.round(rng.normal(0, 10, n), 3)
        else:
            k = 2 if kind in (BINARY_SYMMETRIC, BINARY_ASYMMETRIC) else int(rng.integers(3, 6))
            schema.append(ColumnSchema(f"x{t}", kind, tuple(f"l{j}" for j in range(k))))
            col = rng.integers(0, k, n).astype(float)
        holes = rng.random(n) < missing
        col = np.where(holes, np.nan, col)
        obs = np.flatnonzero(~np.isnan(col))
        if obs.size < 2 or np.unique(col[obs]).size < 2:
            col[0], col[1] = 0.0, 1.0
        cols.append(col)
    values = np.column_stack(cols)
    # no fully missing rows
    for i in range(n):
        if np.isnan(values[i]).all():
            values[i, 0] = cols[0][~np.isnan(cols[0])][0]
    return DataTable(tuple(schema), values)


def naive_column_values(table, t, ordinal="kr"):
    """Per-column transformed values and range, written with plain loops."""
    col = table.schema[t]
    raw = [None if math.isnan(v) else v for v in table.values[:, t]]
    obs = [v for v in raw if v is not None]
    if col.kind == ORDINAL:
        if ordinal == "kr":
            top = max(obs) + 1
            vals = [None if v is None else v / (top - 1) for v in raw]
        else:
            vals = []
            for v in raw:
                if v is None:
                    vals.append(None)
                else:
                    below = sum(1 for u in obs if u < v)
                    equal = sum(1 for u in obs if u == v)
                    vals.append(below + (equal + 1) / 2)
        o = [v for v in vals if v is not None]
        return vals, max(o) - min(o)
    if col.kind == NUMERIC:
        return raw, max(obs) - min(obs)
    return raw, None


def naive_pair(kind, a, b, r):
    """(d, delta) for one variable, straight from the rule table."""
    if a is None or b is None:
        return 0.0, 0
    if kind in (NUMERIC, ORDINAL):
        if r == 0:
            return 0.0, 1
        return min(abs(a - b) / r, 1.0), 1
    if kind == BINARY_ASYMMETRIC:
        if a == 0 and b == 0:
            return 0.0, 0
        return (0.0 if a == 1 and b == 1 else 1.0), 1
    return (0.0 if a == b else 1.0), 1


def naive_gower(table, w=None, ordinal="kr"):
    n, p = table.n, table.p
    w = [1.0] * p if w is None else list(w)
    cols = [naive_column_values(table, t, ordinal) for t in range(p)]
    out = np.full((n, n), np.nan)
    for i in range(n):
        for j in range(n):
            num = den = 0.0
            for t in range(p):
                vals, r = cols[t]
                d, delta = naive_pair(table.schema[t].kind, vals[i], vals[j], r)
                num += w[t] * delta * d
                den += w[t] * delta
            out[i, j] = num / den if den > 0 else np.nan
    return out


def naive_cross(reference, query, w=None, ordinal="kr"):
    """Query-vs-reference matrix with reference ranges and transforms (kr only)."""
    p = reference.p
    w = [1.0] * p if w is None else list(w)
    out = np.full((query.n, reference.n), np.nan)
    ref_cols = [naive_column_values(reference, t, ordinal) for t in range(p)]
    for q in range(query.n):
        for i in range(reference.n):
            num = den = 0.0
            for t in range(p):
                kind = reference.schema[t].kind
                rv, r = ref_cols[t]
                a = None if math.isnan(query.values[q, t]) else query.values[q, t]
                if kind == ORDINAL and a is not None:
                    top = max(v for v in reference.values[:, t] if not math.isnan(v)) + 1
                    a = a / (top - 1)
                d, delta = naive_pair(kind, a, rv[i], r)
                num += w[t] * delta * d
                den += w[t] * delta
            out[q, i] = num / den if den > 0 else np.nan
    return out


@pytest.fixture
def smoker_schema():
    return (
        ColumnSchema("smoke", BINARY_SYMMETRIC, ("nonsmoker", "smoker")),
        ColumnSchema("age", NUMERIC),
    )


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])

"""Per-variable dissimilarities and (weighted) Gower aggregation.

Pairs ``i < j`` are stored in condensed row-major order, the same layout as
``scipy.spatial.distance.squareform``. Undefined pairs (no variable observed
on both units) carry NaN.
"""

from __future__ import annotations

import csv
import io
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import (
    BINARY_ASYMMETRIC,
    BINARY_SYMMETRIC,
    NOMINAL,
    NUMERIC,
    ORDINAL,
    DataError,
    DataTable,
    SchemaError,
    kr_transform,
    podani_ranks,
)

ORDINAL_TREATMENTS = ("kr", "podani")

UNDEFINED = np.nan

_MAGIC = b"GWDM"
_VERSION = 1


def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


def condensed_index(i: int, j: int, n: int) -> int:
    """Offset of pair ``(i, j)`` in condensed storage."""
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"invalid pair ({i}, {j}) for n={n}")
    if i > j:
        i, j = j, i
    return n * i - i * (i + 1) // 2 + (j - i - 1)


def pair_from_index(k: int, n: int) -> tuple[int, int]:
    """Inverse of :func:`condensed_index`."""
    if not 0 <= k < n_pairs(n):
        raise IndexError(k)
    i = 0
    row = n - 1
    while k >= row:
        k -= row
        i += 1
        row -= 1
    return i, i + 1 + k


def pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, 1)


# --------------------------------------------------------------------------
# Single-variable rule
# --------------------------------------------------------------------------

def _dissim_arrays(kind: str, xi: np.ndarray, xj: np.ndarray, r: float | None):
    missing = np.isnan(xi) | np.isnan(xj)
    delta = ~missing
    if kind == NUMERIC:
        if r is None or r < 0:
            raise ValueError("numeric dissimilarity needs a range R >= 0")
        if r == 0:
            d = np.zeros(xi.shape)
        else:
            with np.errstate(invalid="ignore"):
                d = np.minimum(np.abs(xi - xj) / r, 1.0)
    elif kind in (BINARY_SYMMETRIC, NOMINAL, ORDINAL):
        d = (xi != xj).astype(float)
    elif kind == BINARY_ASYMMETRIC:
        delta &= ~((xi == 0) & (xj == 0))
        d = 1.0 - ((xi == 1) & (xj == 1))
    else:
        raise ValueError(f"unknown kind {kind!r}")
    d = np.where(delta, d, 0.0)
    return d, delta


def variable_dissim(kind: str, x_i, x_j, r: float | None = None) -> tuple[float, bool]:
    """Dissimilarity of two cells of one variable and its delta indicator.

    Categorical cells are level indices (for binary kinds ``1`` is the second
    declared level, "presence"). ``None`` or NaN means missing. Numeric
    differences are scaled by ``r`` and capped at 1.
    """
    if kind == NUMERIC and (r is None or r <= 0):
        raise ValueError("numeric dissimilarity needs a positive range R")
    xi = np.array([np.nan if x_i is None else x_i], dtype=float)
    xj = np.array([np.nan if x_j is None else x_j], dtype=float)
    d, delta = _dissim_arrays(kind, xi, xj, r)
    return float(d[0]), bool(delta[0])


# --------------------------------------------------------------------------
# Column encodings (ranges and ordinal transforms come from a reference table)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class _Encoding:
    kind: str  # rule applied after transformation
    scale: float | None  # range for numeric-like columns
    level_values: np.ndarray | None  # ordinal level -> transformed value

    def encode(self, x: np.ndarray) -> np.ndarray:
        if self.level_values is None:
            return x
        out = np.full(x.shape, np.nan)
        ok = ~np.isnan(x)
        out[ok] = self.level_values[x[ok].astype(int)]
        return out


def _encode_column(ref: DataTable, t: int, ordinal: str, declared_levels: bool) -> _Encoding:
    col = ref.schema[t]
    x = ref.values[:, t]
    if col.kind == NUMERIC:
        obs = x[~np.isnan(x)]
        r = float(obs.max() - obs.min()) if obs.size else 0.0
        if r == 0:
            warnings.warn(f"{col.name}: zero range, dissimilarity set to 0", stacklevel=3)
        return _Encoding(NUMERIC, r, None)
    if col.kind != ORDINAL:
        return _Encoding(col.kind, None, None)

    nlev = len(col.levels)
    if ordinal == "kr":
        try:
            z = kr_transform(ref, t, declared_levels)
        except DataError as exc:
            warnings.warn(f"{exc}; dissimilarity set to 0", stacklevel=3)
            return _Encoding(NUMERIC, 0.0, np.zeros(nlev))
        top = nlev if declared_levels else np.nanmax(x) + 1
        level_values = np.arange(nlev) / (top - 1)
        obs = z[~np.isnan(z)]
    elif ordinal == "podani":
        ranks = podani_ranks(ref, t)
        obs_x = x[~np.isnan(x)]
        # average rank of each level within the reference column
        below = np.array([(obs_x < k).sum() for k in range(nlev)], dtype=float)
        equal = np.array([(obs_x == k).sum() for k in range(nlev)], dtype=float)
        level_values = below + (equal + 1.0) / 2.0
        obs = ranks[~np.isnan(ranks)]
    else:
        raise ValueError(f"unknown ordinal treatment {ordinal!r}")
    r = float(obs.max() - obs.min()) if obs.size else 0.0
    if r == 0:
        warnings.warn(f"{col.name}: zero range, dissimilarity set to 0", stacklevel=3)
    return _Encoding(NUMERIC, r, level_values)


def column_encodings(ref: DataTable, ordinal: str = "kr", declared_levels: bool = False) -> list[_Encoding]:
    if ordinal not in ORDINAL_TREATMENTS:
        raise ValueError(f"ordinal treatment must be one of {ORDINAL_TREATMENTS}")
    return [_encode_column(ref, t, ordinal, declared_levels) for t in range(ref.p)]


# --------------------------------------------------------------------------
# Pairwise structures
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PerVariableDissimilarity:
    """Per-pair, per-variable dissimilarities ``d`` and indicators ``delta``.

    Both are ``(m, p)`` arrays with contiguous columns; ``d`` is 0 wherever
    ``delta`` is False.
    """

    d: np.ndarray = field(repr=False)
    delta: np.ndarray = field(repr=False)
    n: int | None = None
    names: tuple[str, ...] = ()

    def __post_init__(self):
        d = np.asfortranarray(self.d, dtype=float)
        delta = np.asfortranarray(self.delta, dtype=bool)
        if d.shape != delta.shape or d.ndim != 2:
            raise ValueError("d and delta must be (m, p) arrays of the same shape")
        d = np.where(delta, d, 0.0)
        d = np.asfortranarray(d)
        d.setflags(write=False)
        delta.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "delta", delta)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"v{t + 1}" for t in range(d.shape[1])))

    @property
    def m(self) -> int:
        return self.d.shape[0]

    @property
    def p(self) -> int:
        return self.d.shape[1]

    @property
    def complete(self) -> bool:
        return bool(self.delta.all())

    def subset(self, rows) -> "PerVariableDissimilarity":
        rows = np.asarray(rows)
        return PerVariableDissimilarity(self.d[rows], self.delta[rows], None, self.names)

    def select(self, cols) -> "PerVariableDissimilarity":
        cols = list(cols)
        return PerVariableDissimilarity(self.d[:, cols], self.delta[:, cols], self.n,
                                        tuple(self.names[c] for c in cols))


def per_variable_matrix(table: DataTable, ordinal: str = "kr",
                        declared_levels: bool = False) -> PerVariableDissimilarity:
    """All-pairs per-variable dissimilarities of ``table``.

    Ordinal columns are transformed first (``kr``: position z-transform,
    ``podani``: average ranks) and then treated as numeric.
    """
    encs = column_encodings(table, ordinal, declared_levels)
    I, J = pair_indices(table.n)
    m = I.size
    d = np.zeros((m, table.p), order="F")
    delta = np.zeros((m, table.p), dtype=bool, order="F")
    for t, enc in enumerate(encs):
        x = enc.encode(table.values[:, t])
        d[:, t], delta[:, t] = _dissim_arrays(enc.kind, x[I], x[J], enc.scale)
    return PerVariableDissimilarity(d, delta, table.n, tuple(table.names))


def _check_weights(w, p: int) -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != p:
        raise ValueError(f"expected {p} weights, got {w.size}")
    if not np.all(np.isfinite(w)) or (w < 0).any():
        raise ValueError("weights must be finite and non-negative")
    top = w.max()
    if top <= 0:
        raise ValueError("weights are all zero")
    # rescaling by the max makes uniform weights exactly 1
    return w / top


def weighted_average(d: np.ndarray, delta: np.ndarray, w, complete: bool | None = None) -> np.ndarray:
    """Row-wise ``sum(delta d w) / sum(delta w)``; NaN where the denominator is 0.

    ``d`` must already be 0 where ``delta`` is False. ``complete`` (all of
    ``delta`` True) is detected when not given.
    """
    w = _check_weights(w, d.shape[1])
    num = d @ w
    if complete is None:
        complete = bool(delta.all())
    if complete:
        # the two sums take different paths, so 1 + ulp can appear
        return np.minimum(num / w.sum(), 1.0)
    den = delta @ w
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.minimum(num / den, 1.0)
    out[den == 0] = UNDEFINED
    return out


@dataclass
class DissimilarityMatrix:
    """Condensed symmetric dissimilarities; NaN marks undefined pairs."""

    values: np.ndarray
    n: int
    labels: list[str] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (n_pairs(self.n),):
            raise ValueError("condensed vector length does not match n")

    @property
    def m(self) -> int:
        return self.values.size

    def __getitem__(self, ij) -> float:
        i, j = ij
        if i == j:
            return 0.0
        return float(self.values[condensed_index(i, j, self.n)])

    def square(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        I, J = pair_indices(self.n)
        out[I, J] = self.values
        out[J, I] = self.values
        return out

    def unit_labels(self) -> list[str]:
        return self.labels or [str(i + 1) for i in range(self.n)]

    def to_csv(self) -> str:
        lab = self.unit_labels()
        return matrix_to_csv(self.square(), lab, lab)

    def to_bytes(self) -> bytes:
        head = _MAGIC + bytes([_VERSION]) + struct.pack("<QQ", self.n, self.m)
        return head + self.values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "DissimilarityMatrix":
        if blob[:4] != _MAGIC:
            raise ValueError("not a GWDM matrix dump")
        if blob[4] != _VERSION:
            raise ValueError(f"unsupported GWDM version {blob[4]}")
        n, m = struct.unpack("<QQ", blob[5:21])
        if m != n_pairs(n) or len(blob) != 21 + 8 * m:
            raise ValueError("corrupt GWDM matrix dump")
        values = np.frombuffer(blob, dtype="<f8", offset=21, count=m).astype(float)
        return cls(values, int(n))


def _fmt(x: float) -> str:
    return "NA" if np.isnan(x) else repr(float(x))


def matrix_to_csv(a: np.ndarray, row_labels, col_labels) -> str:
    """Square or rectangular matrix as CSV with unit identifiers; NaN -> ``NA``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", *col_labels])
    for lab, row in zip(row_labels, a):
        writer.writerow([lab, *(_fmt(x) for x in row)])
    return buf.getvalue()


def gower_weighted(pvd: PerVariableDissimilarity, w) -> DissimilarityMatrix:
    return DissimilarityMatrix(weighted_average(pvd.d, pvd.delta, w), pvd.n if pvd.n is not None else _n_from_m(pvd.m))


def gower_unweighted(pvd: PerVariableDissimilarity) -> DissimilarityMatrix:
    return gower_weighted(pvd, np.ones(pvd.p))


def _n_from_m(m: int) -> int:
    n = int(round((1 + np.sqrt(1 + 8 * m)) / 2))
    if n_pairs(n) != m:
        raise ValueError("pair count is not n(n-1)/2; pass n explicitly")
    return n


def cross_dissimilarity(reference: DataTable, query: DataTable, w=None, ordinal: str = "kr",
                        declared_levels: bool = False) -> np.ndarray:
    """``(n_query, n_reference)`` weighted Gower dissimilarities.

    Ranges and ordinal transforms are taken from ``reference``; numeric
    contributions are capped at 1 for query values outside its range.
    """
    if tuple(reference.schema) != tuple(query.schema):
        raise SchemaError("query and reference schemas differ")
    w = _check_weights(np.ones(reference.p) if w is None else w, reference.p)
    encs = column_encodings(reference, ordinal, declared_levels)
    shape = (query.n, reference.n)
    num = np.zeros(shape)
    den = np.zeros(shape)
    for t, enc in enumerate(encs):
        if w[t] == 0:
            continue
        xr = enc.encode(reference.values[:, t])
        xq = enc.encode(query.values[:, t])
        d, delta = _dissim_arrays(enc.kind, xq[:, None], xr[None, :], enc.scale)
        num += d * w[t]
        den += delta * w[t]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.minimum(num / den, 1.0)
    out[den == 0] = UNDEFINED
    return out

"""k-NN classification experiment on synthetic mixed-type clusters."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import NOMINAL, NUMERIC, ColumnSchema, DataTable
from .gower import cross_dissimilarity
from .seeding import child_int, child_rng
from .weights import GaConfig, fit_weights

log = logging.getLogger(__name__)

ALL_MODES = ("unwG", "wPG", "wPbG", "wSG", "wSbG")


@dataclass(frozen=True)
class ClusterGenConfig:
    clusters: int = 4
    size_range: tuple[int, int] = (20, 40)
    separation: float = 0.3
    flip_fractions: tuple[float, ...] = (0.2, 0.4)
    noisy: bool = True
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.size_range
        if lo < 1 or hi < lo:
            raise ValueError("cluster sizes must satisfy 1 <= low <= high")
        if self.clusters < 2:
            raise ValueError("need at least 2 clusters")
        if any(not 0 <= f <= 1 for f in self.flip_fractions):
            raise ValueError("flip fractions must lie in [0, 1]")
        if not -1 < self.separation < 1:
            raise ValueError("separation index must lie in (-1, 1)")


def cluster_spacing(separation: float) -> float:
    """Distance between neighbouring centres, in within-cluster SD units.

    Two unit-variance normals whose 2.5%/97.5% quantiles give the separation
    index ``J = (L2 - U1) / (U2 - L1)`` sit ``3.92 (1 + J) / (1 - J)`` apart.
    """
    return 2 * 1.959963984540054 * (1 + separation) / (1 - separation)


def _random_covariance(rng: np.random.Generator) -> np.ndarray:
    theta = rng.uniform(0, np.pi)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    eig = rng.uniform(0.5, 1.5, size=2)
    return rot @ np.diag(eig) @ rot.T


def _flip(labels: np.ndarray, fraction: float, k: int, rng: np.random.Generator) -> np.ndarray:
    out = labels.copy()
    n_flip = int(math.floor(fraction * labels.size + 0.5))
    idx = rng.choice(labels.size, size=n_flip, replace=False)
    shift = rng.integers(1, k, size=n_flip)
    out[idx] = (labels[idx] + shift) % k
    return out


def generate_clusters(cfg: ClusterGenConfig, rng: np.random.Generator | None = None):
    """Mixed-type clustered sample and its true labels.

    Columns: ``V1``, ``V2`` (Gaussian clusters on a circle whose neighbour
    spacing follows the separation index), one nominal copy of the label per
    flip fraction (``P02``, ``P04`` for 0.2, 0.4), and optionally ``noisy``,
    a uniformly random label.
    """
    rng = rng if rng is not None else child_rng(cfg.seed, "clusters")
    k = cfg.clusters
    lo, hi = cfg.size_range
    sizes = rng.integers(lo, hi + 1, size=k)
    covs = [_random_covariance(rng) for _ in range(k)]
    sd = float(np.mean([np.sqrt(np.trace(c) / 2) for c in covs]))
    spacing = cluster_spacing(cfg.separation) * sd
    radius = spacing / (2 * np.sin(np.pi / k))
    angles = 2 * np.pi * np.arange(k) / k
    centres = radius * np.column_stack([np.cos(angles), np.sin(angles)])

    labels = np.repeat(np.arange(k), sizes)
    xy = np.vstack([rng.multivariate_normal(centres[c], covs[c], size=s) for c, s in enumerate(sizes)])
    levels = tuple(f"c{c + 1}" for c in range(k))
    schema = [ColumnSchema("V1", NUMERIC), ColumnSchema("V2", NUMERIC)]
    cols = [xy[:, 0], xy[:, 1]]
    for f in cfg.flip_fractions:
        schema.append(ColumnSchema(f"P{int(round(f * 10)):02d}", NOMINAL, levels))
        cols.append(_flip(labels, f, k, rng))
    if cfg.noisy:
        schema.append(ColumnSchema("noisy", NOMINAL, levels))
        cols.append(rng.integers(0, k, size=labels.size))
    return DataTable(tuple(schema), np.column_stack(cols).astype(float)), labels


def split_train_test(n: int, fraction: float, rng: np.random.Generator):
    """Seeded split of ``range(n)`` into ``floor(fraction n)`` train rows and the rest."""
    if not 0 < fraction < 1:
        raise ValueError("train fraction must lie in (0, 1)")
    n_train = int(math.floor(fraction * n))
    if n_train == 0 or n_train == n:
        raise ValueError("split leaves one side empty")
    perm = rng.permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def knn_classify(train: DataTable, train_labels, test: DataTable, k: int, w=None,
                 rng: np.random.Generator | None = None, ordinal: str = "kr") -> np.ndarray:
    """Majority vote among the ``k`` least dissimilar training units.

    Equal dissimilarities at the k-th place go to the lower training index;
    tied votes are broken at random from ``rng``.
    """
    train_labels = np.asarray(train_labels)
    if not 1 <= k <= train.n:
        raise ValueError("k must lie in [1, number of training units]")
    rng = rng if rng is not None else np.random.default_rng(0)
    dist = cross_dissimilarity(train, test, w, ordinal=ordinal)
    dist = np.where(np.isnan(dist), np.inf, dist)
    classes, codes = np.unique(train_labels, return_inverse=True)
    out = np.empty(test.n, dtype=train_labels.dtype)
    for q in range(test.n):
        row = dist[q]
        if np.isinf(row).all():
            raise ValueError(f"test unit {q}: dissimilarity undefined to every training unit")
        nearest = np.argsort(row, kind="stable")[:k]
        votes = np.bincount(codes[nearest], minlength=classes.size)
        top = np.flatnonzero(votes == votes.max())
        pick = top[0] if top.size == 1 else top[rng.integers(top.size)]
        out[q] = classes[pick]
    return out


# --------------------------------------------------------------------------
# Experiment
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class KnnExperimentConfig:
    generator: ClusterGenConfig = field(default_factory=ClusterGenConfig)
    train_fraction: float = 0.7
    ks: tuple[int, ...] = (7, 9, 11)
    iterations: int = 100
    modes: tuple[str, ...] = ALL_MODES
    noisy_options: tuple[bool, ...] = (False, True)
    ga: GaConfig = field(default_factory=GaConfig)
    seed: int = 0
    ordinal: str = "kr"
    shuffle_labels: bool = False

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train fraction must lie in (0, 1)")
        if any(k < 1 for k in self.ks):
            raise ValueError("all k must be >= 1")
        bad = set(self.modes) - set(ALL_MODES)
        if bad:
            raise ValueError(f"unknown modes {sorted(bad)}")


@dataclass
class IterationResult:
    index: int
    accuracy: dict = field(default_factory=dict)  # (mode, noisy, k) -> accuracy
    weights: dict = field(default_factory=dict)  # (mode, noisy) -> weights
    names: dict = field(default_factory=dict)  # noisy -> variable names
    error: str | None = None


def run_iteration(cfg: KnnExperimentConfig, i: int) -> IterationResult:
    res = IterationResult(i)
    try:
        gen_cfg = replace(cfg.generator, noisy=True)
        table, labels = generate_clusters(gen_cfg, child_rng(cfg.seed, "iter", i, "generate"))
        if cfg.shuffle_labels:
            labels = child_rng(cfg.seed, "iter", i, "shuffle").permutation(labels)
        tr, te = split_train_test(table.n, cfg.train_fraction, child_rng(cfg.seed, "iter", i, "split"))
        for noisy in cfg.noisy_options:
            names = [nm for nm in table.names if noisy or nm != "noisy"]
            sub = table.select(names)
            train, test = sub.take(tr), sub.take(te)
            res.names[noisy] = names
            for mode in cfg.modes:
                ga = replace(cfg.ga, seed=child_int(cfg.seed, "iter", i, "ga", mode, int(noisy)))
                fit = fit_weights(train, mode, ga, ordinal=cfg.ordinal)
                res.weights[(mode, noisy)] = fit.weights
                for k in cfg.ks:
                    vote_rng = child_rng(cfg.seed, "iter", i, "vote", mode, int(noisy), k)
                    pred = knn_classify(train, labels[tr], test, k, fit.weights, vote_rng, cfg.ordinal)
                    res.accuracy[(mode, noisy, k)] = float(np.mean(pred == labels[te]))
    except (ValueError, ArithmeticError) as exc:
        log.warning("iteration %d failed: %s", i, exc)
        res.error = str(exc)
    return res


def _run_all(fn, cfg, count: int, threads: int):
    if threads <= 1 or count <= 1:
        return [fn(cfg, i) for i in range(count)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, [cfg] * count, range(count)))


@dataclass
class KnnSummary:
    rows: list[dict]
    iterations: list[IterationResult]

    def mean_accuracy(self, mode: str, noisy: bool, k: int) -> float:
        for r in self.rows:
            if (r["mode"], r["noisy"], r["k"]) == (mode, noisy, k):
                return r["mean_accuracy"]
        raise KeyError((mode, noisy, k))

    def mean_weights(self, mode: str, noisy: bool) -> dict[str, float]:
        for r in self.rows:
            if (r["mode"], r["noisy"]) == (mode, noisy):
                return dict(zip(r["variables"], r["weights"]))
        raise KeyError((mode, noisy))

    @property
    def failures(self) -> int:
        return sum(1 for it in self.iterations if it.error)

    def to_csv(self) -> str:
        p = max(len(r["weights"]) for r in self.rows) if self.rows else 0
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["mode", "noisy", "k", "mean_accuracy", *[f"w_{t + 1}" for t in range(p)]])
        for r in self.rows:
            ws = [f"{x:.6f}" for x in r["weights"]] + [""] * (p - len(r["weights"]))
            writer.writerow([r["mode"], int(r["noisy"]), r["k"], f"{r['mean_accuracy']:.6f}", *ws])
        return buf.getvalue()


def summarize_knn(cfg: KnnExperimentConfig, results: list[IterationResult]) -> KnnSummary:
    ok = [r for r in results if r.error is None]
    rows = []
    for noisy in cfg.noisy_options:
        for mode in cfg.modes:
            for k in cfg.ks:
                acc = [r.accuracy[(mode, noisy, k)] for r in ok]
                ws = [r.weights[(mode, noisy)] for r in ok]
                rows.append({
                    "mode": mode, "noisy": noisy, "k": k,
                    "mean_accuracy": float(np.mean(acc)) if acc else math.nan,
                    "weights": list(np.mean(ws, axis=0)) if ws else [],
                    "variables": ok[0].names[noisy] if ok else [],
                })
    return KnnSummary(rows, results)


def run_knn_experiment(cfg: KnnExperimentConfig, threads: int = 1) -> KnnSummary:
    """Repeat generate / split / fit / classify and average per (mode, noisy, k).

    Iteration ``i`` draws every random quantity from streams derived from
    ``(cfg.seed, i)``, so the summary does not depend on ``threads``.
    """
    results = _run_all(run_iteration, cfg, cfg.iterations, threads)
    return summarize_knn(cfg, results)

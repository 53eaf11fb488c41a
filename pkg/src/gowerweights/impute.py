"""Nearest-neighbour donor imputation experiment on a synthetic household survey."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import NOMINAL, NUMERIC, ORDINAL, ColumnSchema, DataTable
from .gower import cross_dissimilarity, per_variable_matrix
from .knn import _run_all
from .seeding import child_int, child_rng
from .weights import GaConfig, fit_weights

log = logging.getLogger(__name__)

ALL_MODES = ("unwG", "wPG", "wPbG", "wSG", "wSbG")

EDUCATION = ("none", "primary", "lower-secondary", "vocational", "upper-secondary",
             "bachelor", "master", "doctorate")
MARITAL = ("single", "married", "widowed", "divorced")
WORKING = ("employed", "retired", "other")

VARIABLE_SETS = {
    2: ("income", "education"),
    4: ("income", "education", "marital", "working"),
}

QUANTILE_LEVELS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def proxy_schema(education_nominal: bool = False) -> tuple[ColumnSchema, ...]:
    return (
        ColumnSchema("income", NUMERIC),
        ColumnSchema("expenditure", NUMERIC),
        ColumnSchema("education", NOMINAL if education_nominal else ORDINAL, EDUCATION),
        ColumnSchema("marital", NOMINAL, MARITAL),
        ColumnSchema("working", NOMINAL, WORKING),
    )


def generate_shiw_proxy(seed: int = 0, n: int = 477, education_nominal: bool = False) -> DataTable:
    """One-person households with income, consumption and three categorical traits.

    Income is lognormal with level shifts by working status and a mild
    education effect; consumption follows income on the log scale (raw-scale
    correlation near 0.7). Marital status is unrelated to either.
    """
    if n < 50:
        raise ValueError("proxy needs at least 50 units")
    rng = child_rng(seed, "shiw-proxy")
    working = rng.choice(3, size=n, p=[0.375, 0.45, 0.175])
    # retirees are older and have less schooling
    edu_shift = np.array([1.0, -0.8, 0.0])[working]
    education = np.clip(np.round(rng.normal(3.6 + edu_shift, 1.6)), 0, 7)
    marital = np.array([rng.choice(4, p=[0.40, 0.10, 0.25, 0.25]) for _ in working])

    status_effect = np.array([0.25, 0.0, -0.45])[working]
    log_income = 9.75 + status_effect + 0.05 * (education - 3.5) + rng.normal(0, 0.42, size=n)
    log_exp = 1.6 + 0.78 * log_income + rng.normal(0, 0.35, size=n)
    income = np.round(np.exp(log_income), 0)
    expenditure = np.round(np.exp(log_exp), 0)

    values = np.column_stack([income, expenditure, education, marital, working]).astype(float)
    return DataTable(proxy_schema(education_nominal), values)


# --------------------------------------------------------------------------
# Missingness and imputation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MarConfig:
    target: str = "expenditure"
    condition: str = "working"
    probabilities: dict = field(default_factory=lambda: {"employed": 0.5, "retired": 0.1, "other": 0.1})
    seed: int = 0

    def __post_init__(self):
        if any(not 0 <= p <= 1 for p in self.probabilities.values()):
            raise ValueError("missingness probabilities must lie in [0, 1]")


@dataclass
class MarSample:
    recipients: np.ndarray  # row indices with the target masked
    donors: np.ndarray
    truth: np.ndarray  # full target column before masking


def simulate_mar(table: DataTable, cfg: MarConfig, rng: np.random.Generator | None = None) -> MarSample:
    """Mask the target with a probability depending on the conditioning category."""
    rng = rng if rng is not None else child_rng(cfg.seed, "mar")
    t = table.column_index(cfg.target)
    truth = table.values[:, t].copy()
    if np.isnan(truth).any():
        raise ValueError(f"target {cfg.target} must be fully observed")
    c = table.column_index(cfg.condition)
    levels = table.schema[c].levels
    unknown = set(cfg.probabilities) - set(levels)
    if unknown:
        raise ValueError(f"unknown categories {sorted(unknown)} for {cfg.condition}")
    prob_by_level = np.array([cfg.probabilities.get(lv, 0.0) for lv in levels])
    cond = table.values[:, c]
    prob = np.where(np.isnan(cond), 0.0, prob_by_level[np.nan_to_num(cond).astype(int)])
    masked = rng.random(table.n) < prob
    donors = np.flatnonzero(~masked)
    if donors.size == 0:
        raise ValueError("no donors left after masking")
    return MarSample(np.flatnonzero(masked), donors, truth)


def nnd_impute(recipients: DataTable, donors: DataTable, donor_values, w=None,
               rng: np.random.Generator | None = None, ordinal: str = "kr") -> np.ndarray:
    """Value of the least dissimilar donor for every recipient.

    ``recipients`` and ``donors`` hold the auxiliary variables only; ranges
    come from the donors. Donors tied at the minimum are picked at random.
    """
    donor_values = np.asarray(donor_values, dtype=float)
    if donors.n == 0:
        raise ValueError("empty donor set")
    if donor_values.size != donors.n:
        raise ValueError("one target value per donor expected")
    rng = rng if rng is not None else np.random.default_rng(0)
    dist = cross_dissimilarity(donors, recipients, w, ordinal=ordinal)
    dist = np.where(np.isnan(dist), np.inf, dist)
    out = np.empty(recipients.n)
    for q in range(recipients.n):
        row = dist[q]
        best = row.min()
        if np.isinf(best):
            raise ValueError(f"recipient {q}: dissimilarity undefined to every donor")
        ties = np.flatnonzero(row == best)
        pick = ties[0] if ties.size == 1 else ties[rng.integers(ties.size)]
        out[q] = donor_values[pick]
    return out


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------

def _as_replications(reconstructed) -> np.ndarray:
    rec = np.asarray(reconstructed, dtype=float)
    if rec.ndim == 1:
        rec = rec[None, :]
    if rec.shape[0] < 1:
        raise ValueError("need at least one replication")
    return rec


def metric_totals(truth, reconstructed) -> tuple[float, float]:
    """Relative bias and relative RMSE of the reconstructed totals.

    ``reconstructed`` is ``(B, n)``: observed plus imputed values per
    replication.
    """
    truth = np.asarray(truth, dtype=float)
    rec = _as_replications(reconstructed)
    t_hat = truth.sum()
    if t_hat == 0:
        raise ValueError("true total is zero")
    err = rec.sum(axis=1) - t_hat
    return float(err.mean() / t_hat), float(math.sqrt(np.mean(err ** 2)) / t_hat)


def metric_sdq(truth, reconstructed, levels=QUANTILE_LEVELS) -> float:
    """Mean absolute gap between reconstructed and true quantiles.

    Quantiles use linear interpolation between order statistics.
    """
    truth = np.asarray(truth, dtype=float)
    rec = _as_replications(reconstructed)
    q_true = np.quantile(truth, levels)
    q_rec = np.quantile(rec, levels, axis=1).T
    return float(np.mean(np.abs(q_rec - q_true).mean(axis=1)))


# --------------------------------------------------------------------------
# Experiment
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ImputeExperimentConfig:
    n: int = 477
    replications: int = 250
    variable_sets: tuple[int, ...] = (2, 4)
    modes: tuple[str, ...] = ALL_MODES
    probabilities: dict = field(default_factory=lambda: {"employed": 0.5, "retired": 0.1, "other": 0.1})
    ga: GaConfig = field(default_factory=lambda: GaConfig(population=30, generations=60, stall=20))
    max_pairs: int = 5_000
    fit_on: str = "donors"  # or "all"
    education_nominal: bool = False
    ordinal: str = "kr"
    seed: int = 0

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if set(self.variable_sets) - set(VARIABLE_SETS):
            raise ValueError(f"variable sets must be among {sorted(VARIABLE_SETS)}")
        if set(self.modes) - set(ALL_MODES):
            raise ValueError("unknown mode")
        if self.fit_on not in ("donors", "all"):
            raise ValueError("fit_on must be 'donors' or 'all'")


@dataclass
class ReplicationResult:
    index: int
    reconstructed: dict = field(default_factory=dict)  # (mode, vars) -> target column
    weights: dict = field(default_factory=dict)
    missing_fraction: float = math.nan
    error: str | None = None


def run_replication(cfg: ImputeExperimentConfig, b: int, table: DataTable | None = None) -> ReplicationResult:
    table = table if table is not None else generate_shiw_proxy(cfg.seed, cfg.n, cfg.education_nominal)
    res = ReplicationResult(b)
    try:
        mar = MarConfig(probabilities=cfg.probabilities)
        sample = simulate_mar(table, mar, child_rng(cfg.seed, "rep", b, "mar"))
        res.missing_fraction = sample.recipients.size / table.n
        for nvars in cfg.variable_sets:
            aux = table.select(VARIABLE_SETS[nvars])
            donors, recipients = aux.take(sample.donors), aux.take(sample.recipients)
            fit_table = donors if cfg.fit_on == "donors" else aux
            pvd = per_variable_matrix(fit_table, cfg.ordinal) if cfg.modes != ("unwG",) else None
            for mode in cfg.modes:
                if mode == "unwG":
                    w = np.full(aux.p, 1.0 / aux.p)
                else:
                    ga = replace(cfg.ga, seed=child_int(cfg.seed, "rep", b, "ga", mode, nvars))
                    w = fit_weights(pvd, mode, ga, max_pairs=cfg.max_pairs).weights
                rec = sample.truth.copy()
                if sample.recipients.size:
                    tie_rng = child_rng(cfg.seed, "rep", b, "ties", mode, nvars)
                    rec[sample.recipients] = nnd_impute(recipients, donors, sample.truth[sample.donors],
                                                        w, tie_rng, cfg.ordinal)
                res.reconstructed[(mode, nvars)] = rec
                res.weights[(mode, nvars)] = np.asarray(w, dtype=float)
    except (ValueError, ArithmeticError) as exc:
        log.warning("replication %d failed: %s", b, exc)
        res.error = str(exc)
    return res


@dataclass
class ImputeSummary:
    rows: list[dict]
    replications: list[ReplicationResult]
    truth: np.ndarray

    def row(self, mode: str, nvars: int) -> dict:
        for r in self.rows:
            if (r["mode"], r["variables"]) == (mode, nvars):
                return r
        raise KeyError((mode, nvars))

    @property
    def failures(self) -> int:
        return sum(1 for r in self.replications if r.error)

    def missing_fraction(self) -> float:
        return float(np.mean([r.missing_fraction for r in self.replications if r.error is None]))

    def to_csv(self) -> str:
        p = max((len(r["weights"]) for r in self.rows), default=0)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["mode", "variables", *[f"w_{t + 1}" for t in range(p)],
                         "srB_x1000", "srRMSE_x1000", "sDQ"])
        for r in self.rows:
            ws = [f"{x:.6f}" for x in r["weights"]] + [""] * (p - len(r["weights"]))
            writer.writerow([r["mode"], r["variables"], *ws, f"{1000 * r['srB']:.6f}",
                             f"{1000 * r['srRMSE']:.6f}", f"{r['sDQ']:.6f}"])
        return buf.getvalue()


def summarize_impute(cfg: ImputeExperimentConfig, truth: np.ndarray,
                     results: list[ReplicationResult]) -> ImputeSummary:
    ok = [r for r in results if r.error is None]
    rows = []
    for nvars in cfg.variable_sets:
        for mode in cfg.modes:
            if ok:
                rec = np.vstack([r.reconstructed[(mode, nvars)] for r in ok])
                srb, srrmse = metric_totals(truth, rec)
                sdq = metric_sdq(truth, rec)
                ws = list(np.mean([r.weights[(mode, nvars)] for r in ok], axis=0))
            else:
                srb = srrmse = sdq = math.nan
                ws = []
            rows.append({"mode": mode, "variables": nvars, "weights": ws,
                         "names": VARIABLE_SETS[nvars], "srB": srb, "srRMSE": srrmse, "sDQ": sdq})
    return ImputeSummary(rows, results, truth)


def _replication_worker(cfg: ImputeExperimentConfig, b: int) -> ReplicationResult:
    return run_replication(cfg, b)


def run_impute_experiment(cfg: ImputeExperimentConfig, threads: int = 1) -> ImputeSummary:
    """Repeat mask / fit / impute ``cfg.replications`` times on one proxy sample."""
    table = generate_shiw_proxy(cfg.seed, cfg.n, cfg.education_nominal)
    truth = table.column("expenditure").copy()
    if threads <= 1:
        results = [run_replication(cfg, b, table) for b in range(cfg.replications)]
    else:
        results = _run_all(_replication_worker, cfg, cfg.replications, threads)
    return summarize_impute(cfg, truth, results)

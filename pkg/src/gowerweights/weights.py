"""Automatic variable weights that balance each variable's correlation with
the weighted Gower dissimilarity.

The criterion is the sample standard deviation of the correlation profile.
A closed form exists for Pearson correlations on complete data
(``solve_analytic``); everything else goes through a real-coded genetic
algorithm over the weight simplex (``search_ga``).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .correlation import MODES, ProfileEvaluator
from .dataset import DataTable
from .gower import PerVariableDissimilarity, per_variable_matrix
from .seeding import child_rng

log = logging.getLogger(__name__)

UNDEFINED_PENALTY = 0.5
MAX_PAIRS = 200_000


@dataclass(frozen=True)
class GaConfig:
    population: int = 50
    generations: int = 200
    crossover: float = 0.8
    mutation: float = 0.1
    mutation_scale: float = 0.1
    elitism: int = 1
    stall: int = 50
    seed: int = 0
    blend_alpha: float = 0.5

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be at least 4")
        if not (0 <= self.crossover <= 1 and 0 <= self.mutation <= 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must be in [0, population)")
        if self.generations < 0 or self.stall < 1 or self.mutation_scale < 0:
            raise ValueError("invalid generation budget, stall or mutation scale")


def uniform_weights(p: int) -> np.ndarray:
    return np.full(p, 1.0 / p)


def normalize(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if (w < 0).any() or w.sum() <= 0:
        raise ValueError("weights must be non-negative and not all zero")
    return w / w.sum()


def _spread(r: np.ndarray, absolute: bool) -> tuple[float, int]:
    ok = ~np.isnan(r)
    vals = np.abs(r[ok]) if absolute else r[ok]
    if vals.size < 2:
        return math.nan, int((~ok).sum())
    return float(np.std(vals, ddof=1)), int((~ok).sum())


class Objective:
    """Callable criterion bound to one ``pvd`` and mode.

    ``penalized(w)`` adds a fixed penalty per undefined correlation and is
    what the search minimizes; it is infinite with fewer than 2 defined.
    """

    def __init__(self, pvd: PerVariableDissimilarity, mode: str, absolute: bool = False,
                 h_rule: str = "mean", clip: bool = False):
        self.evaluator = ProfileEvaluator(pvd, mode, h_rule, clip)
        self.absolute = absolute
        self.evaluations = 0

    def __call__(self, w) -> float:
        value, undefined = _spread(self.evaluator.profile_values(w), self.absolute)
        if math.isnan(value):
            raise ValueError("objective undefined: fewer than 2 defined correlations")
        if undefined:
            warnings.warn(f"{undefined} undefined correlation(s) excluded from the objective", stacklevel=2)
        return value

    def penalized(self, w) -> float:
        self.evaluations += 1
        value, undefined = _spread(self.evaluator.profile_values(w), self.absolute)
        if math.isnan(value):
            return math.inf
        return value + UNDEFINED_PENALTY * undefined


def objective(pvd: PerVariableDissimilarity, w, mode: str, absolute: bool = False,
              h_rule: str = "mean", clip: bool = False) -> float:
    """Sample standard deviation of the defined entries of the correlation profile."""
    return Objective(pvd, mode, absolute, h_rule, clip)(w)


# --------------------------------------------------------------------------
# Closed form
# --------------------------------------------------------------------------

class AnalyticError(ValueError):
    pass


def solve_analytic(pvd: PerVariableDissimilarity) -> tuple[np.ndarray, bool]:
    """Weights giving every variable the same Pearson correlation with d_wG.

    On complete data d_wG is linear in the normalized weights, so equal
    correlations mean ``C w = k * sigma`` (C the covariance of the
    per-variable columns, sigma their standard deviations) with
    ``sum(w) = 1``. Returns the solution and whether it is non-negative.
    """
    if not pvd.complete:
        raise AnalyticError("closed form needs every pair observed on every variable")
    if pvd.m < 3:
        raise AnalyticError("too few pairs")
    p = pvd.p
    cov = np.cov(pvd.d, rowvar=False).reshape(p, p)
    sigma = np.sqrt(np.diag(cov))
    if (sigma == 0).any():
        raise AnalyticError("a variable has constant dissimilarity")
    corr = cov / np.outer(sigma, sigma)
    off = corr[~np.eye(p, dtype=bool)]
    if off.size and np.max(np.abs(off)) >= 1 - 1e-12:
        raise AnalyticError("two variables are perfectly correlated")
    a = np.zeros((p + 1, p + 1))
    a[:p, :p] = cov
    a[:p, p] = -sigma
    a[p, :p] = 1.0
    rhs = np.zeros(p + 1)
    rhs[p] = 1.0
    try:
        sol = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise AnalyticError(f"singular system: {exc}") from None
    w = sol[:p]
    return w, bool((w >= 0).all())


# --------------------------------------------------------------------------
# Genetic algorithm
# --------------------------------------------------------------------------

@dataclass
class GaResult:
    weights: np.ndarray
    objective: float
    trace: list[float] = field(default_factory=list)
    generations: int = 0
    evaluations: int = 0


def _repair(c: np.ndarray) -> np.ndarray:
    c = np.maximum(c, 0.0)
    s = c.sum()
    if s <= 0:
        return uniform_weights(c.size)
    return c / s


def search_ga(pvd: PerVariableDissimilarity, mode: str, cfg: GaConfig | None = None, *,
              absolute: bool = False, h_rule: str = "mean", clip: bool = False,
              rng: np.random.Generator | None = None) -> GaResult:
    """Minimize the correlation spread over the weight simplex.

    Generation 0 holds the uniform vector plus Dirichlet(1) draws. Parents
    come from size-2 tournaments, children from blend crossover followed by
    per-gene Gaussian mutation, clipping at 0 and renormalization. The best
    ``elitism`` individuals survive unchanged, so the result is never worse
    than uniform weights.
    """
    cfg = cfg or GaConfig()
    p = pvd.p
    if p == 1:
        return GaResult(np.ones(1), math.nan)
    rng = rng if rng is not None else child_rng(cfg.seed, "ga")
    crit = Objective(pvd, mode, absolute, h_rule, clip)

    size = cfg.population
    pop = np.vstack([uniform_weights(p), rng.dirichlet(np.ones(p), size=size - 1)])
    fit = np.array([crit.penalized(w) for w in pop])
    if not np.isfinite(fit).any():
        raise ValueError("objective undefined for every individual of the initial population")

    def tournament() -> int:
        i, j = rng.integers(size, size=2)
        return int(i) if (fit[i], i) <= (fit[j], j) else int(j)

    best = int(np.argmin(fit))
    trace = [float(fit[best])]
    stall = 0
    gen = 0
    for gen in range(1, cfg.generations + 1):
        order = np.argsort(fit, kind="stable")
        elite = order[: cfg.elitism]
        children = []
        while len(children) < size - cfg.elitism:
            a, b = pop[tournament()], pop[tournament()]
            if rng.random() < cfg.crossover:
                u = rng.uniform(-cfg.blend_alpha, 1 + cfg.blend_alpha, size=p)
                pair = (a + u * (b - a), b + u * (a - b))
            else:
                pair = (a.copy(), b.copy())
            for c in pair:
                hit = rng.random(p) < cfg.mutation
                c = c + hit * rng.normal(0.0, cfg.mutation_scale, size=p)
                children.append(_repair(c))
        children = np.array(children[: size - cfg.elitism])
        child_fit = np.array([crit.penalized(w) for w in children])
        pop = np.vstack([pop[elite], children])
        fit = np.concatenate([fit[elite], child_fit])

        prev = trace[-1]
        best = int(np.argmin(fit))
        trace.append(float(fit[best]))
        if fit[best] < prev - 1e-12:
            stall = 0
        else:
            stall += 1
            if stall >= cfg.stall:
                break
    return GaResult(pop[best].copy(), float(fit[best]), trace, gen, crit.evaluations)


# --------------------------------------------------------------------------
# Front door
# --------------------------------------------------------------------------

@dataclass
class FitResult:
    weights: np.ndarray
    path: str  # "uniform", "analytic" or "ga"
    objective: float
    uniform_objective: float
    trace: list[float] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    pairs_used: int = 0
    profile: np.ndarray | None = None
    names: tuple[str, ...] = ()

    def format_trace(self) -> str:
        lines = [f"path: {self.path}"] + [f"note: {n}" for n in self.notes]
        lines.append(f"objective uniform: {self.uniform_objective!r}")
        lines.append(f"objective fitted: {self.objective!r}")
        for g, v in enumerate(self.trace):
            lines.append(f"generation {g}: best objective {v!r}")
        return "\n".join(lines) + "\n"


def fit_weights(data: DataTable | PerVariableDissimilarity, mode: str, cfg: GaConfig | None = None, *,
                ordinal: str = "kr", declared_levels: bool = False, max_pairs: int = MAX_PAIRS,
                absolute: bool = False, h_rule: str = "mean", clip: bool = False,
                allow_analytic: bool = True) -> FitResult:
    """Fit weights for ``mode`` (``unwG`` returns uniform weights).

    Pearson mode on complete data uses the closed form when it is
    non-negative; every other case runs the genetic algorithm. With more than
    ``max_pairs`` pairs a seeded uniform subsample of pairs is used.
    """
    if mode != "unwG" and mode not in MODES:
        raise ValueError(f"mode must be unwG or one of {MODES}")
    cfg = cfg or GaConfig()
    pvd = data if isinstance(data, PerVariableDissimilarity) else per_variable_matrix(data, ordinal, declared_levels)
    p = pvd.p
    notes = []
    if pvd.m > max_pairs:
        total = pvd.m
        idx = np.sort(child_rng(cfg.seed, "pairs").choice(total, size=max_pairs, replace=False))
        pvd = pvd.subset(idx)
        notes.append(f"fitted on {max_pairs} sampled pairs out of {total}")
    uniform = uniform_weights(p)

    if p == 1:
        warnings.warn("a single variable always gets weight 1", stacklevel=2)
        return FitResult(np.ones(1), "uniform", math.nan, math.nan, notes=notes + ["single variable"],
                         pairs_used=pvd.m, names=pvd.names)

    crit = Objective(pvd, "wPG" if mode == "unwG" else mode, absolute, h_rule, clip)
    u_obj = crit.penalized(uniform)

    def done(w, path, value, trace=()):
        prof = crit.evaluator.profile_values(w)
        return FitResult(np.asarray(w, dtype=float), path, value, u_obj, list(trace), notes, pvd.m, prof,
                         pvd.names)

    if mode == "unwG":
        return done(uniform, "uniform", u_obj)

    if mode == "wPG" and allow_analytic:
        if pvd.complete:
            try:
                w, feasible = solve_analytic(pvd)
            except AnalyticError as exc:
                notes.append(f"closed form unavailable: {exc}")
            else:
                if feasible:
                    value = crit.penalized(w)
                    if value <= u_obj + 1e-12:
                        return done(w, "analytic", value)
                    notes.append("closed form worse than uniform weights")
                else:
                    notes.append("closed form gives negative weights")
        else:
            notes.append("missing contributions rule out the closed form")

    res = search_ga(pvd, mode, cfg, absolute=absolute, h_rule=h_rule, clip=clip)
    return done(res.weights, "ga", res.objective, res.trace)

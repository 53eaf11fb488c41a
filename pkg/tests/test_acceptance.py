"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

The lines are collected in ``RESULTS`` and echoed in the pytest terminal
summary (see ``conftest.py``), so they show up even with output capture on.
"""

import subprocess
import sys
import time
import warnings

import numpy as np
import pytest

from conftest import naive_cross, naive_gower, random_table
from gowerweights.correlation import brogden_biserial, correlation_profile, pearson, point_biserial, rank_biserial
from gowerweights.dataset import BINARY_SYMMETRIC, NOMINAL, NUMERIC, ColumnSchema, DataTable, load_table
from gowerweights.gower import cross_dissimilarity, gower_unweighted, gower_weighted, per_variable_matrix
from gowerweights.impute import ImputeExperimentConfig, metric_sdq, metric_totals, run_impute_experiment
from gowerweights.knn import KnnExperimentConfig, run_knn_experiment
from gowerweights.weights import GaConfig, Objective, fit_weights, search_ga, solve_analytic, uniform_weights

RESULTS: dict[int, str] = {}


class Gate:
    """Collects named checks for one criterion and reports them on exit."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.failed: list[str] = []
        self.t0 = time.perf_counter()

    def check(self, ok: bool, what: str):
        if not ok:
            self.failed.append(what)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        secs = time.perf_counter() - self.t0
        if exc is not None:
            self.failed.append(f"raised {exc_type.__name__}: {exc}")
        status = "FAIL" if self.failed else "PASS"
        line = f"criterion {self.number:2d} {status} ({secs:.1f}s) {self.title}"
        if self.failed:
            line += " -- " + "; ".join(self.failed)
        RESULTS[self.number] = line
        print(line)
        assert not self.failed, line
        return False


SMOKER = (ColumnSchema("smoke", BINARY_SYMMETRIC, ("nonsmoker", "smoker")), ColumnSchema("age", NUMERIC))


def _pair_dissim(a, b):
    t = load_table(f"smoke,age\n{a[0]},{a[1]}\n{b[0]},{b[1]}\nnonsmoker,100\nsmoker,15\n", SMOKER)
    return gower_unweighted(per_variable_matrix(t))[0, 1]


def test_criterion_01_worked_examples():
    with Gate(1, "worked smoker/age examples") as g:
        d = _pair_dissim(("smoker", 15), ("smoker", 78))
        g.check(abs(d - 0.3706) <= 5e-5, f"(15 vs 78) gave {d}")
        d = _pair_dissim(("smoker", 24), ("nonsmoker", 24))
        g.check(d == 0.5, f"(24 vs 24, smoking differs) gave {d}")
        d = _pair_dissim(("smoker", 15), ("smoker", 100))
        g.check(d == 0.5, f"(15 vs 100) gave {d}")


def test_criterion_02_brute_force_equivalence():
    with Gate(2, "condensed and rectangular matrices vs naive reference") as g:
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(200):
            n, p = int(rng.integers(2, 9)), int(rng.integers(1, 5))
            t = random_table(rng, n, p, missing=0.1)
            w = rng.random(p) + 0.05
            want = naive_gower(t, w)
            got = gower_weighted(per_variable_matrix(t), w).square()
            off = ~np.eye(n, dtype=bool)
            both = off & ~np.isnan(want)
            g.check(np.array_equal(np.isnan(got[off]), np.isnan(want[off])), "undefined pattern differs")
            worst = max(worst, float(np.max(np.abs(got[both] - want[both]), initial=0.0)))
            # rectangular: shuffled rows with stretched numeric values as queries
            stretch = np.array([1.5 if c.kind == NUMERIC else 1.0 for c in t.schema])
            q = DataTable(t.schema, t.values[rng.permutation(n)] * stretch)
            want_x = naive_cross(t, q, w)
            got_x = cross_dissimilarity(t, q, w)
            g.check(np.array_equal(np.isnan(got_x), np.isnan(want_x)), "rectangular undefined pattern differs")
            ok = ~np.isnan(want_x)
            worst = max(worst, float(np.max(np.abs(got_x[ok] - want_x[ok]), initial=0.0)))
        g.check(worst <= 1e-12, f"max deviation {worst:.3g}")
        g.check(time.perf_counter() - g.t0 < 5, "slower than 5 s")


def test_criterion_03_estimators():
    with Gate(3, "point-biserial identity, rank-biserial and Brogden hand cases") as g:
        rng = np.random.default_rng(3)
        worst = 0.0
        draws = 0
        while draws < 500:
            m = int(rng.integers(3, 80))
            x = rng.normal(size=m)
            dt = (rng.random(m) < rng.uniform(0.1, 0.9)).astype(float)
            if dt.min() == dt.max():
                continue
            worst = max(worst, abs(point_biserial(x, dt) - pearson(x, dt)))
            draws += 1
        g.check(worst <= 1e-12, f"point-biserial vs Pearson deviation {worst:.3g}")
        r = rank_biserial([3, 4, 1, 2], [1, 1, 0, 0])
        g.check(r == 1.0, f"rank biserial hand case gave {r}")
        r = brogden_biserial([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        g.check(abs(r - 1.3125) <= 1e-12, f"Brogden hand case gave {r}")
        g.check(time.perf_counter() - g.t0 < 2, "slower than 2 s")


def test_criterion_04_point_biserial_ceiling():
    with Gate(4, "point-biserial attainable range near 0.798") as g:
        rng = np.random.default_rng(4)
        dwg = np.sort(rng.standard_normal(10_000))
        dt = np.repeat([0.0, 1.0], 5_000)
        r = point_biserial(dwg, dt)
        g.check(abs(abs(r) - 0.798) <= 0.02, f"|r| = {abs(r):.4f}")
        g.check(time.perf_counter() - g.t0 < 2, "slower than 2 s")


def test_criterion_05_search_soundness():
    with Gate(5, "fit never worse than uniform; analytic equalizes; GA matches analytic") as g:
        rng = np.random.default_rng(5)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for trial in range(6):
                t = random_table(rng, int(rng.integers(12, 30)), int(rng.integers(2, 5)), missing=0.1)
                for mode in ("wPG", "wPbG", "wSG", "wSbG"):
                    fit = fit_weights(t, mode, GaConfig(population=20, generations=40, stall=15, seed=trial))
                    g.check(fit.objective <= fit.uniform_objective + 1e-12, f"table {trial} {mode} worse than uniform")
        checked = 0
        for trial in range(20):
            if checked == 6:
                break
            p = 2 + trial % 2
            t = random_table(rng, 30, p, missing=0.0, kinds=[NUMERIC] * p)
            pvd = per_variable_matrix(t)
            w, feasible = solve_analytic(pvd)
            if not feasible:
                continue
            checked += 1
            r = correlation_profile(pvd, w, "wPG").r
            g.check(r.max() - r.min() <= 1e-8, f"analytic spread {r.max() - r.min():.3g}")
            ga = search_ga(pvd, "wPG", GaConfig(population=50, generations=200, seed=trial))
            target = Objective(pvd, "wPG").penalized(w)
            g.check(abs(ga.objective - target) <= 1e-3, f"GA {ga.objective:.3g} vs analytic {target:.3g}")
            g.check(ga.objective <= Objective(pvd, "wPG").penalized(uniform_weights(p)) + 1e-12, "GA worse than uniform")
        g.check(checked == 6, f"only {checked} feasible numeric tables")
        g.check(time.perf_counter() - g.t0 < 60, "slower than 60 s")


def _p2_table(seed):
    rng = np.random.default_rng(seed)
    n = 40
    x = rng.normal(size=n)
    grp = np.digitize(x + rng.normal(0, 1.0, n), [-0.5, 0.5])
    schema = (ColumnSchema("x", NUMERIC), ColumnSchema("g", NOMINAL, ("a", "b", "c")))
    return DataTable(schema, np.column_stack([x, grp]))


def test_criterion_06_ga_vs_grid():
    with Gate(6, "p=2 GA weight vs 0.001-step grid optimum, 10 seeds") as g:
        grid = np.round(np.arange(0, 1001) / 1000, 3)
        worst = 0.0
        for seed in range(10):
            pvd = per_variable_matrix(_p2_table(seed))
            crit = Objective(pvd, "wPbG")
            vals = np.array([crit.penalized([a, 1 - a]) if 0 < a < 1 else np.inf for a in grid])
            best = grid[int(np.argmin(vals))]
            ga = search_ga(pvd, "wPbG", GaConfig(seed=seed))
            worst = max(worst, abs(ga.weights[0] - best))
        g.check(worst <= 0.02, f"max |dw| = {worst:.4f}")
        g.check(time.perf_counter() - g.t0 < 30, "slower than 30 s")


def test_criterion_07_knn_direction():
    with Gate(7, "k-NN: weights favour continuous variables, wPbG beats unwG, noise hurts unwG") as g:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            base = KnnExperimentConfig(ks=(7,), iterations=50, noisy_options=(False,), seed=0)
            summary = run_knn_experiment(base)
            noisy = run_knn_experiment(KnnExperimentConfig(ks=(7,), iterations=50, modes=("unwG",),
                                                           noisy_options=(False, True), seed=0))
        g.check(summary.failures == 0 and noisy.failures == 0, "iterations failed")
        for mode in ("wPG", "wPbG", "wSG", "wSbG"):
            w = summary.mean_weights(mode, False)
            g.check(w["V1"] + w["V2"] > 0.5, f"{mode} continuous weight {w['V1'] + w['V2']:.3f}")
        acc_u = summary.mean_accuracy("unwG", False, 7)
        acc_b = summary.mean_accuracy("wPbG", False, 7)
        g.check(acc_b >= acc_u + 0.02, f"wPbG {acc_b:.4f} vs unwG {acc_u:.4f}")
        acc_n = noisy.mean_accuracy("unwG", True, 7)
        g.check(acc_n < noisy.mean_accuracy("unwG", False, 7), f"noisy unwG {acc_n:.4f} not lower")
        g.check(time.perf_counter() - g.t0 < 600, "slower than 10 min")


def test_criterion_08_impute_direction():
    with Gate(8, "imputation: income weighted most, sDQ(wSbG) <= sDQ(unwG), metric hand cases") as g:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            summary = run_impute_experiment(ImputeExperimentConfig(replications=100, variable_sets=(4,), seed=0))
        g.check(summary.failures == 0, "replications failed")
        for mode in ("wPG", "wPbG", "wSG", "wSbG"):
            w = summary.row(mode, 4)["weights"]
            g.check(int(np.argmax(w)) == 0, f"{mode} weights {np.round(w, 3).tolist()}")
        s_b, s_u = summary.row("wSbG", 4)["sDQ"], summary.row("unwG", 4)["sDQ"]
        g.check(s_b <= s_u, f"sDQ wSbG {s_b:.2f} vs unwG {s_u:.2f}")
        srb, srrmse = metric_totals([60.0, 40.0], [[70.0, 40.0], [50.0, 40.0]])
        g.check(srb == 0.0 and abs(srrmse - 0.1) <= 1e-15, f"hand case gave {srb}, {srrmse}")
        zero = run_impute_experiment(ImputeExperimentConfig(
            replications=3, variable_sets=(4,), modes=("unwG", "wSbG"),
            probabilities={"employed": 0.0, "retired": 0.0, "other": 0.0}))
        for row in zero.rows:
            g.check((row["srB"], row["srRMSE"], row["sDQ"]) == (0.0, 0.0, 0.0), f"{row['mode']} metrics not 0")
        g.check(metric_sdq([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0, "sDQ of exact data not 0")
        g.check(time.perf_counter() - g.t0 < 600, "slower than 10 min")


def _cli(*argv):
    return subprocess.run([sys.executable, "-m", "gowerweights.cli", *argv], capture_output=True, check=True).stdout


def test_criterion_09_thread_determinism():
    with Gate(9, "experiment CSVs byte-identical across --threads") as g:
        knn = ["knn-sim", "--iters", "4", "--k", "7", "9", "--modes", "unwG", "wPbG", "wSG", "--noisy",
               "--ga-pop", "16", "--ga-gens", "20", "--seed", "9"]
        a, b = _cli(*knn, "--threads", "1"), _cli(*knn, "--threads", "3")
        g.check(a == b and len(a) > 0, "knn-sim output differs")
        imp = ["impute-sim", "--reps", "4", "--vars", "both", "--modes", "unwG", "wPG", "wSbG",
               "--ga-pop", "16", "--ga-gens", "15", "--seed", "9"]
        a, b = _cli(*imp, "--threads", "1"), _cli(*imp, "--threads", "2")
        g.check(a == b and len(a) > 0, "impute-sim output differs")


def test_criterion_10_desk_scale():
    with Gate(10, "n=500, p=6: full matrix plus wPbG fit under 60 s") as g:
        rng = np.random.default_rng(10)
        t = random_table(rng, 500, 6, missing=0.02,
                         kinds=[NUMERIC, NUMERIC, NUMERIC, BINARY_SYMMETRIC, NOMINAL, "ordinal"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pvd = per_variable_matrix(t)
            g.check(pvd.m == 124_750, f"pair count {pvd.m}")
            dm = gower_unweighted(pvd)
            fit = fit_weights(pvd, "wPbG", GaConfig(seed=0))
            gower_weighted(pvd, fit.weights)
        secs = time.perf_counter() - g.t0
        g.check(dm.m == 124_750 and fit.path == "ga", "unexpected path")
        g.check(secs < 60, f"took {secs:.1f} s")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))

"""Command-line front door.

Exit codes: 0 success, 1 success with warnings, 2 fatal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .correlation import MODES
from .dataset import DataTable, SchemaError, DataError, format_schema, load_table, parse_schema, to_csv, validate
from .gower import gower_weighted, per_variable_matrix
from .impute import ImputeExperimentConfig, generate_shiw_proxy, run_impute_experiment
from .knn import ClusterGenConfig, KnnExperimentConfig, run_knn_experiment
from .weights import MAX_PAIRS, GaConfig, fit_weights

log = logging.getLogger("gowerweights")

EXIT_OK, EXIT_WARN, EXIT_FATAL = 0, 1, 2


class CliError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _read_table(args) -> DataTable:
    schema = parse_schema(Path(args.schema).read_text(encoding="utf-8"))
    return load_table(Path(args.data).read_text(encoding="utf-8"), schema)


def _emit(args, payload: str | bytes):
    if args.out:
        mode = "wb" if isinstance(payload, bytes) else "w"
        with open(args.out, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(payload)
    elif isinstance(payload, bytes):
        sys.stdout.buffer.write(payload)
    else:
        sys.stdout.write(payload)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("GOWER_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"GOWER_SEED must be an integer, got {env!r}") from None
    return 0


def _ga_config(args) -> GaConfig:
    base = GaConfig()
    return GaConfig(
        population=args.ga_pop if args.ga_pop is not None else base.population,
        generations=args.ga_gens if args.ga_gens is not None else base.generations,
        crossover=args.ga_pcross if args.ga_pcross is not None else base.crossover,
        mutation=args.ga_pmut if args.ga_pmut is not None else base.mutation,
        mutation_scale=args.ga_mut_scale if args.ga_mut_scale is not None else base.mutation_scale,
        elitism=args.ga_elite if args.ga_elite is not None else base.elitism,
        stall=args.ga_stall if args.ga_stall is not None else base.stall,
        seed=_seed(args),
    )


def _pretty(csv_text: str) -> str:
    rows = list(csv.reader(io.StringIO(csv_text)))
    if not rows:
        return ""
    widths = [max(len(r[c]) if c < len(r) else 0 for r in rows) for c in range(len(rows[0]))]
    return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(r, widths)) for r in rows) + "\n"


def _table_output(args, csv_text: str):
    if args.format == "bin":
        raise CliError("binary output is only available for dissimilarity matrices")
    _emit(args, _pretty(csv_text) if args.format == "pretty" else csv_text)


def _fit(args, table_or_pvd, mode: str):
    return fit_weights(table_or_pvd, mode, _ga_config(args), ordinal=args.ordinal,
                       declared_levels=args.declared_levels, max_pairs=args.max_pairs,
                       absolute=args.absolute, h_rule=args.h_rule, clip=args.clip)


def _weights_csv(fit) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["variable", "weight", "correlation"])
    prof = fit.profile if fit.profile is not None else np.full(len(fit.weights), np.nan)
    for name, w, r in zip(fit.names, fit.weights, prof):
        writer.writerow([name, repr(float(w)), "NA" if np.isnan(r) else repr(float(r))])
    return buf.getvalue()


def _read_weights(source: str, names) -> np.ndarray:
    if source == "uniform":
        return np.ones(len(names))
    rows = list(csv.DictReader(io.StringIO(Path(source).read_text(encoding="utf-8"))))
    by_name = {r["variable"]: float(r["weight"]) for r in rows}
    missing = [nm for nm in names if nm not in by_name]
    if missing:
        raise CliError(f"weights file lacks variables {missing}")
    return np.array([by_name[nm] for nm in names])


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_validate(args) -> int:
    try:
        table = _read_table(args)
    except DataError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FATAL
    report = validate(table)
    _emit(args, report.format())
    if report.fatal:
        return EXIT_FATAL
    return EXIT_OK if report.clean else EXIT_WARN


def cmd_dist(args) -> int:
    table = _read_table(args)
    pvd = per_variable_matrix(table, args.ordinal, args.declared_levels)
    if args.weights is not None:
        w = _read_weights(args.weights, table.names)
    elif args.mode == "unwG":
        w = np.ones(table.p)
    else:
        fit = _fit(args, pvd, args.mode)
        w = fit.weights
        log.info("fitted weights (%s, %s path): %s", args.mode, fit.path,
                 ", ".join(f"{nm}={x:.6f}" for nm, x in zip(fit.names, w)))
        log.info("correlation profile: %s", ", ".join(f"{nm}={r:.6f}" for nm, r in zip(fit.names, fit.profile)))
    dm = gower_weighted(pvd, w)
    if args.format == "bin":
        _emit(args, dm.to_bytes())
    elif args.format == "pretty":
        sq = dm.square()
        lines = ["\t".join("NA" if np.isnan(x) else f"{x:.4f}" for x in row) for row in sq]
        _emit(args, "\n".join(lines) + "\n")
    else:
        _emit(args, dm.to_csv())
    return EXIT_OK


def cmd_weights(args) -> int:
    table = _read_table(args)
    fit = _fit(args, table, args.mode)
    sys.stderr.write(f"path: {fit.path}\n")
    sys.stderr.write(f"objective uniform: {fit.uniform_objective!r}\nobjective fitted: {fit.objective!r}\n")
    if args.trace:
        Path(args.trace).write_text(fit.format_trace(), encoding="utf-8")
    _table_output(args, _weights_csv(fit))
    return EXIT_OK


def cmd_knn_sim(args) -> int:
    seed = _seed(args)
    gen = ClusterGenConfig(separation=args.separation)
    cfg = KnnExperimentConfig(
        generator=gen, ks=tuple(args.k), iterations=args.iters, modes=tuple(args.modes),
        noisy_options=(False, True) if args.noisy else (False,), ga=_ga_config(args),
        seed=seed, ordinal=args.ordinal,
    )
    summary = run_knn_experiment(cfg, threads=args.threads)
    if summary.failures:
        log.warning("%d iteration(s) failed", summary.failures)
    _table_output(args, summary.to_csv())
    return EXIT_OK


def cmd_impute_sim(args) -> int:
    seed = _seed(args)
    probs = {"employed": args.p_employed, "retired": args.p_other, "other": args.p_other}
    defaults = ImputeExperimentConfig()
    ga = _ga_config(args)
    if args.ga_pop is None and args.ga_gens is None and args.ga_stall is None:
        ga = GaConfig(population=defaults.ga.population, generations=defaults.ga.generations,
                      stall=defaults.ga.stall, crossover=ga.crossover, mutation=ga.mutation,
                      mutation_scale=ga.mutation_scale, elitism=ga.elitism, seed=ga.seed)
    cfg = ImputeExperimentConfig(
        replications=args.reps, variable_sets=(2, 4) if args.vars == "both" else (int(args.vars),),
        modes=tuple(args.modes), probabilities=probs, ga=ga,
        max_pairs=args.max_pairs if args.max_pairs != MAX_PAIRS else defaults.max_pairs,
        fit_on=args.fit_on, education_nominal=args.education == "nominal", ordinal=args.ordinal,
        seed=seed, n=args.n,
    )
    summary = run_impute_experiment(cfg, threads=args.threads)
    if summary.failures:
        log.warning("%d replication(s) failed", summary.failures)
    _table_output(args, summary.to_csv())
    return EXIT_OK


def cmd_export_proxy(args) -> int:
    table = generate_shiw_proxy(_seed(args), args.n, args.education == "nominal")
    Path(args.data_out).write_text(to_csv(table), encoding="utf-8")
    Path(args.schema_out).write_text(format_schema(table.schema), encoding="utf-8")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_common(p, data=True):
    if data:
        p.add_argument("--data", required=True, help="CSV file with a header row")
        p.add_argument("--schema", required=True, help="schema file (name = kind [levels: ...])")
    p.add_argument("--seed", type=int, default=None, help="master seed (falls back to $GOWER_SEED, then 0)")
    p.add_argument("--threads", type=int, default=1, help="worker cap; never changes results")
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "pretty", "bin"), default="csv")
    p.add_argument("--ordinal", choices=("kr", "podani"), default="kr")
    p.add_argument("--declared-levels", action="store_true",
                   help="scale ordinal positions by the declared level count")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_ga(p):
    g = p.add_argument_group("weight search")
    g.add_argument("--ga-pop", type=int)
    g.add_argument("--ga-gens", type=int)
    g.add_argument("--ga-pcross", type=float)
    g.add_argument("--ga-pmut", type=float)
    g.add_argument("--ga-mut-scale", type=float)
    g.add_argument("--ga-elite", type=int)
    g.add_argument("--ga-stall", type=int)
    g.add_argument("--max-pairs", type=int, default=MAX_PAIRS)
    g.add_argument("--absolute", action="store_true", help="balance absolute correlations")
    g.add_argument("--h-rule", choices=("mean", "proportion"), default="mean")
    g.add_argument("--clip", action="store_true", help="clip Brogden estimates to [-1, 1]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gowerweights", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="report missing rates and degenerate columns")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("dist", help="pairwise Gower dissimilarity matrix")
    _add_common(p)
    _add_ga(p)
    p.add_argument("--mode", choices=("unwG",) + MODES, default="unwG")
    p.add_argument("--weights", help="'uniform' or a variable,weight CSV")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("weights", help="fit correlation-balancing weights")
    _add_common(p)
    _add_ga(p)
    p.add_argument("--mode", choices=("unwG",) + MODES, default="wPbG")
    p.add_argument("--trace", help="write the per-generation trace here")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("knn-sim", help="k-NN classification experiment")
    _add_common(p, data=False)
    _add_ga(p)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--k", type=int, nargs="+", default=[7, 9, 11])
    p.add_argument("--noisy", action="store_true", help="also run with the noisy variable")
    p.add_argument("--separation", type=float, default=0.3)
    p.add_argument("--modes", nargs="+", choices=("unwG",) + MODES, default=["unwG", *MODES])
    p.set_defaults(func=cmd_knn_sim)

    p = sub.add_parser("impute-sim", help="nearest-neighbour donor imputation experiment")
    _add_common(p, data=False)
    _add_ga(p)
    p.add_argument("--reps", type=int, default=250)
    p.add_argument("--vars", choices=("2", "4", "both"), default="both")
    p.add_argument("--n", type=int, default=477)
    p.add_argument("--modes", nargs="+", choices=("unwG",) + MODES, default=["unwG", *MODES])
    p.add_argument("--p-employed", type=float, default=0.5, help="missingness probability, employed")
    p.add_argument("--p-other", type=float, default=0.1, help="missingness probability, everyone else")
    p.add_argument("--fit-on", choices=("donors", "all"), default="donors")
    p.add_argument("--education", choices=("ordinal", "nominal"), default="ordinal")
    p.set_defaults(func=cmd_impute_sim)

    p = sub.add_parser("export-proxy", help="write the synthetic survey sample as CSV + schema")
    p.add_argument("--data-out", required=True)
    p.add_argument("--schema-out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n", type=int, default=477)
    p.add_argument("--education", choices=("ordinal", "nominal"), default="ordinal")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_export_proxy)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            code = args.func(args)
        except (CliError, SchemaError, DataError, ValueError, OSError) as exc:
            sys.stderr.write(f"error: {exc}\n")
            return EXIT_FATAL
    seen = set()
    for w in caught:
        msg = str(w.message)
        if msg not in seen:
            seen.add(msg)
            sys.stderr.write(f"warning: {msg}\n")
    if code == EXIT_OK and seen:
        return EXIT_WARN
    return code


if __name__ == "__main__":
    sys.exit(main())

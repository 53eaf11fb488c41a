"""Gower's mixed-type dissimilarity with automatic, correlation-balancing weights."""

from .correlation import (
    MODES,
    CorrelationProfile,
    brogden_biserial,
    correlation_profile,
    pearson,
    point_biserial,
    rank_biserial,
    spearman,
)
from .dataset import (
    ColumnSchema,
    DataError,
    DataTable,
    SchemaError,
    column_range,
    kr_transform,
    load_table,
    parse_schema,
    podani_ranks,
    validate,
)
from .gower import (
    DissimilarityMatrix,
    PerVariableDissimilarity,
    cross_dissimilarity,
    gower_unweighted,
    gower_weighted,
    per_variable_matrix,
    variable_dissim,
)
from .weights import GaConfig, fit_weights, objective, search_ga, solve_analytic

__version__ = "0.1.0"

__all__ = [
    "MODES", "CorrelationProfile", "brogden_biserial", "correlation_profile", "pearson",
    "point_biserial", "rank_biserial", "spearman", "ColumnSchema", "DataError", "DataTable",
    "SchemaError", "column_range", "kr_transform", "load_table", "parse_schema", "podani_ranks",
    "validate", "DissimilarityMatrix", "PerVariableDissimilarity", "cross_dissimilarity",
    "gower_unweighted", "gower_weighted", "per_variable_matrix", "variable_dissim", "GaConfig",
    "fit_weights", "objective", "search_ga", "solve_analytic",
]

"""Explainable per-dataset algorithm selection for multi-label classification.

Given a corpus of multi-label datasets and a table of algorithm performances,
the toolkit computes dataset meta-features, prunes correlated features and
metrics, trains from-scratch regression forests under leave-one-dataset-out
cross-validation to predict algorithm performance, selects the best predicted
algorithm per dataset, scores the selector against single-best and virtual-best
baselines, and explains each selection with exact Shapley attributions.
"""

from .core import (
    Mode,
    MetricRegistry,
    MetricSpec,
    Orientation,
    RunConfig,
    default_metric_registry,
    derive_seed,
    format_float,
    rng_for,
)
from .errors import MlcSelectError
from .explain import (
    DomainAnalysis,
    DomainTopK,
    FeatureImportance,
    ShapExplanation,
    brute_force_shap,
    domain_topk,
    selector_shap,
    summary_ranking,
    tree_shap,
)
from .forest import (
    DecisionTreeRegressor,
    ForestParams,
    RandomForestRegressor,
    RegressionForest,
    RegressionTree,
    default_grid,
    fit_forest,
    fit_tree,
    grid_search,
)
from .ingest import (
    ColumnKind,
    MLCDataset,
    PerformanceTable,
    ValidationReport,
    load_dataset,
    load_performance_table,
    save_dataset,
    validate_join,
)
from .metafeatures import (
    FEATURE_CATALOGUE,
    CorrelationPruner,
    FeatureGroup,
    MetaFeatureMatrix,
    MetaFeatureVector,
    build_matrix,
    chi2_dependent_ratio,
    compute_metafeatures,
    pearson,
    prune_correlated,
    prune_metrics,
)
from .selection import (
    AlgorithmPortfolio,
    BoxStats,
    LOOModels,
    LOOResult,
    PredictionsTable,
    SelectionReport,
    build_portfolio,
    compare_reports,
    evaluate_selection,
    loo_predictions,
    regret_table,
    sbs,
    select,
    selector_macro_f1,
    vbs,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Mode",
    "MetricRegistry",
    "MetricSpec",
    "Orientation",
    "RunConfig",
    "default_metric_registry",
    "derive_seed",
    "format_float",
    "rng_for",
    "MlcSelectError",
    "ColumnKind",
    "MLCDataset",
    "PerformanceTable",
    "ValidationReport",
    "load_dataset",
    "load_performance_table",
    "save_dataset",
    "validate_join",
    "FEATURE_CATALOGUE",
    "FeatureGroup",
    "MetaFeatureVector",
    "MetaFeatureMatrix",
    "CorrelationPruner",
    "build_matrix",
    "chi2_dependent_ratio",
    "compute_metafeatures",
    "pearson",
    "prune_correlated",
    "prune_metrics",
    "ForestParams",
    "RegressionTree",
    "RegressionForest",
    "DecisionTreeRegressor",
    "RandomForestRegressor",
    "default_grid",
    "fit_tree",
    "fit_forest",
    "grid_search",
    "AlgorithmPortfolio",
    "BoxStats",
    "LOOModels",
    "LOOResult",
    "PredictionsTable",
    "SelectionReport",
    "build_portfolio",
    "compare_reports",
    "evaluate_selection",
    "loo_predictions",
    "regret_table",
    "sbs",
    "select",
    "selector_macro_f1",
    "vbs",
    "ShapExplanation",
    "FeatureImportance",
    "DomainTopK",
    "DomainAnalysis",
    "tree_shap",
    "brute_force_shap",
    "selector_shap",
    "summary_ranking",
    "domain_topk",
]

"""Coherent point forecasts for linked hierarchies of time series."""

from .base_forecast import (
    BaseForecastSet,
    ForecasterConfig,
    build_base_set,
    export_base_set,
    forecast_univariate,
    ingest_external,
)
from .covariance import (
    CovarianceEstimate,
    CovarianceSpec,
    estimate_shrinkage_intensity,
    make_weight_matrix,
    sample_covariance,
)
from .evaluation import (
    EvaluationReport,
    ExperimentConfig,
    expanding_windows,
    group_series,
    run_experiment,
    skill_score,
    write_report,
)
from .hierarchy import (
    Hierarchy,
    HierarchyError,
    HierarchySpec,
    LinkedSystem,
    build_matrices,
    check_coherence,
    link_hierarchies,
    load_hierarchy_spec,
    parse_hierarchy_spec,
)
from .panel import TimeSeriesPanel
from .reconcile import (
    ReconciliationError,
    ReconciliationResult,
    projection_matrix,
    reconcile,
    reconcile_batch,
)

__version__ = "0.1.0"

__all__ = [
    "BaseForecastSet",
    "build_base_set",
    "build_matrices",
    "check_coherence",
    "CovarianceEstimate",
    "CovarianceSpec",
    "estimate_shrinkage_intensity",
    "EvaluationReport",
    "expanding_windows",
    "ExperimentConfig",
    "export_base_set",
    "forecast_univariate",
    "ForecasterConfig",
    "group_series",
    "Hierarchy",
    "HierarchyError",
    "HierarchySpec",
    "ingest_external",
    "link_hierarchies",
    "LinkedSystem",
    "load_hierarchy_spec",
    "make_weight_matrix",
    "parse_hierarchy_spec",
    "projection_matrix",
    "reconcile",
    "reconcile_batch",
    "ReconciliationError",
    "ReconciliationResult",
    "run_experiment",
    "sample_covariance",
    "skill_score",
    "TimeSeriesPanel",
    "write_report",
]

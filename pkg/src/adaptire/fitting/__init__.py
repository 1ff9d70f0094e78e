"""Least-squares identification of adaptation trees from slip-sweep data."""

from .nlls import FitProblem, FitResult, FitStage, nlls_solve
from .pipeline import AdaptedMfRegressor, FitReport, fit_stage_pipeline, fit_with_report
from .synthetic import (
    REFERENCE,
    SweepGrid,
    SweepObservation,
    calibrated_tree,
    random_tree,
    read_sweep_csv,
    sensitivities,
    synthesize_sweep_data,
    write_sweep_csv,
)

__all__ = [
    "REFERENCE",
    "AdaptedMfRegressor",
    "FitProblem",
    "FitReport",
    "FitResult",
    "FitStage",
    "SweepGrid",
    "SweepObservation",
    "calibrated_tree",
    "fit_stage_pipeline",
    "fit_with_report",
    "nlls_solve",
    "random_tree",
    "read_sweep_csv",
    "sensitivities",
    "synthesize_sweep_data",
    "write_sweep_csv",
]

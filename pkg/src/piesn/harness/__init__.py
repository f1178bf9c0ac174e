"""Datasets, metrics, hyperparameter search and experiment runners."""
from .dataset import Dataset, SplitSpec, make_dataset
from .experiments import (
    RUNNERS, AggregateRow, ExperimentResult, RunRecord, fit_models, plan_jobs, run_datasize_sweep, run_esp,
    check_thresholds, win_fraction, run_closed_loop, run_experiment, run_mpc_comparison, run_reservoir_sweep, run_robustness,
    run_comparison,
)
from .metrics import MseResult, evaluate_mse, mse, predict_unlabelled
from .search import GridSearchError, GridSpec, SearchResult, grid_search

__all__ = [
    "Dataset", "SplitSpec", "make_dataset", "RUNNERS", "AggregateRow", "ExperimentResult", "RunRecord",
    "check_thresholds", "win_fraction", "run_closed_loop", "fit_models", "plan_jobs", "run_datasize_sweep", "run_esp", "run_experiment", "run_mpc_comparison",
    "run_reservoir_sweep", "run_robustness", "run_comparison", "MseResult", "evaluate_mse", "mse",
    "predict_unlabelled", "GridSearchError", "GridSpec", "SearchResult", "grid_search",
]

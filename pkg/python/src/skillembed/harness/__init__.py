"""Experiment orchestration: config files, metrics, recipes and the command line."""

from .config import (Algorithm, ExperimentConfig, ExperimentSettings, InterpolateSettings, Recipe, RetrainSettings,
                     UnseenSettings, load_config, parse_cells, parse_config, parse_vector, resolve_output_dir,
                     serialize_config)
from .learners import (build_learner, evaluate_cells, independent_learners, learner_config, parameter_count,
                       random_policy_return, restore_learner, step_learner)
from .metrics import METRICS_COLUMNS, MetricsRow, MetricsWriter, read_rows, write_rows
from .recipes import (RetrainResult, UnseenFit, independent_baseline, interpolate, retrain, run_hrl, run_recipe,
                      run_retrain, run_training, summarize_initial_returns, sweep, train_seed, trajectories_to_match,
                      unseen_condition_fit)

__all__ = [
    "METRICS_COLUMNS",
    "Algorithm",
    "ExperimentConfig",
    "ExperimentSettings",
    "InterpolateSettings",
    "MetricsRow",
    "MetricsWriter",
    "Recipe",
    "RetrainResult",
    "RetrainSettings",
    "UnseenFit",
    "UnseenSettings",
    "build_learner",
    "evaluate_cells",
    "independent_baseline",
    "independent_learners",
    "interpolate",
    "learner_config",
    "load_config",
    "parameter_count",
    "parse_cells",
    "parse_config",
    "parse_vector",
    "random_policy_return",
    "read_rows",
    "resolve_output_dir",
    "restore_learner",
    "retrain",
    "run_hrl",
    "run_recipe",
    "run_retrain",
    "run_training",
    "serialize_config",
    "step_learner",
    "summarize_initial_returns",
    "sweep",
    "train_seed",
    "trajectories_to_match",
    "unseen_condition_fit",
]

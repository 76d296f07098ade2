"""Multidimensional item response models fitted as penalized logistic matrix factorization."""

__version__ = "0.1.0"

from .bound import (
    ScalarDistribution,
    empirical_expected_accuracy,
    expected_accuracy_from_density,
    rasch_density,
    rasch_expected_accuracy,
)
from .data import ResponseMatrix
from .errors import MirtError
from .metrics import accuracy, auc, evaluate, gk_lambda, log_loss, rmse
from .model import ModelSpec, ParameterSet, difficulty, gradient, logit, penalized_objective, predict, prob
from .optim import FitConfig, FitResult, fit, score_persons
from .postprocess import factor_overlap_selection, orthogonalize, recovery_report
from .selection import (
    SearchSpace,
    best_model_elementwise,
    best_model_striated,
    sample_mask,
    select,
    split_rows,
    striated_performance_test,
)
from .simulate import GroundTruth, SimConfig, apply_mcar, preset, simulate

__all__ = [
    "FitConfig",
    "FitResult",
    "GroundTruth",
    "MirtError",
    "ModelSpec",
    "ParameterSet",
    "ResponseMatrix",
    "ScalarDistribution",
    "SearchSpace",
    "SimConfig",
    "accuracy",
    "apply_mcar",
    "auc",
    "best_model_elementwise",
    "best_model_striated",
    "difficulty",
    "empirical_expected_accuracy",
    "evaluate",
    "expected_accuracy_from_density",
    "factor_overlap_selection",
    "fit",
    "gk_lambda",
    "gradient",
    "log_loss",
    "logit",
    "orthogonalize",
    "penalized_objective",
    "predict",
    "preset",
    "prob",
    "rasch_density",
    "rasch_expected_accuracy",
    "recovery_report",
    "rmse",
    "sample_mask",
    "score_persons",
    "select",
    "simulate",
    "split_rows",
    "striated_performance_test",
]

"""Sparse-input neural networks: a sparse group lasso on first-layer weights."""
from .estimator import SPINNClassifier, SPINNRegressor
from .exceptions import FitError, NumericError, ShapeError, SpinnError, ValidationError
from .model_selection import CVReport, HyperGrid, cross_validate, feature_report, lambda_max
from .network import (
    Activation,
    Dataset,
    NetworkArchitecture,
    NetworkParameters,
    Task,
    forward,
    predict,
    smooth_loss,
    smooth_loss_gradient,
)
from .optimizer import FitResult, TrainConfig, fit
from .penalty import PenaltyConfig, full_objective, sgl_prox

__version__ = "0.1.0"

__all__ = [
    "Activation", "CVReport", "Dataset", "FitError", "FitResult", "HyperGrid",
    "NetworkArchitecture", "NetworkParameters", "NumericError", "PenaltyConfig",
    "SPINNClassifier", "SPINNRegressor", "ShapeError", "SpinnError", "Task", "TrainConfig",
    "ValidationError", "cross_validate", "feature_report", "fit", "forward", "full_objective",
    "lambda_max", "predict", "sgl_prox", "smooth_loss", "smooth_loss_gradient",
]

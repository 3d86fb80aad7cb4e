"""Score-oriented losses for binary classifiers.

The classical confusion matrix depends on a threshold ``tau``; treating
``tau`` as a random variable with cdf ``F`` gives an expected confusion
matrix that is differentiable in the classifier outputs. Minus a skill
score of that matrix is a training loss that targets the score directly.
"""

from .confusion import (
    ClassicalConfusion,
    ExpectedConfusion,
    LabeledBatch,
    classical_cm,
    classical_cm_many,
    expected_cm,
    expected_cm_gradient,
)
from .distributions import ThresholdDistribution, cdf, inverse_cdf, pdf, raised_cosine, sample, uniform
from .network import CrossEntropy, NetworkSpec, ObjectiveSpec, WeightSet, forward, init_weights
from .scores import ScoreKind, SolLoss, score_from_entries, score_value, sol_loss, sol_loss_gradient
from .threshold import optimal_threshold_histogram, sweep
from .train import NumericalError, TrainConfig, TrainReport, fit

__version__ = "0.1.0"

__all__ = [
    "ClassicalConfusion",
    "CrossEntropy",
    "ExpectedConfusion",
    "LabeledBatch",
    "NetworkSpec",
    "NumericalError",
    "ObjectiveSpec",
    "ScoreKind",
    "SolLoss",
    "ThresholdDistribution",
    "TrainConfig",
    "TrainReport",
    "WeightSet",
    "cdf",
    "classical_cm",
    "classical_cm_many",
    "expected_cm",
    "expected_cm_gradient",
    "fit",
    "forward",
    "init_weights",
    "inverse_cdf",
    "optimal_threshold_histogram",
    "pdf",
    "raised_cosine",
    "sample",
    "score_from_entries",
    "score_value",
    "sol_loss",
    "sol_loss_gradient",
    "sweep",
    "uniform",
]

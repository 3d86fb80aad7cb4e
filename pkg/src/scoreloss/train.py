"""Training loop: validation split, Adam updates, early stopping and run records."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .network import (
    Adam,
    NetworkSpec,
    NumericalError,
    ObjectiveSpec,
    WeightSet,
    init_weights,
    objective_gradient,
    objective_value,
    weights_to_dict,
)

__all__ = [
    "NumericalError",
    "TrainConfig",
    "TrainReport",
    "Split",
    "split_validation",
    "fit",
    "TRAIN_KEYS",
    "coerce_train_fields",
    "STUCK_TOLERANCE",
    "IMPROVEMENT_TOLERANCE",
]

log = logging.getLogger(__name__)

STUCK_TOLERANCE = 1e-4
IMPROVEMENT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class TrainConfig:
    objective: ObjectiveSpec
    max_epochs: int = 500
    patience: int = 30
    validation_fraction: float = 1.0 / 3.0
    seed: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int | None = None

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be positive")
        if self.patience < 1:
            raise ValueError("patience must be positive")
        if self.patience > self.max_epochs:
            raise ValueError(f"patience {self.patience} exceeds max_epochs {self.max_epochs}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass(eq=False)
class TrainReport:
    epochs_run: int
    best_epoch: int
    best_validation_loss: float
    success: bool
    final_weights: WeightSet
    train_history: list[float] = field(default_factory=list)
    validation_history: list[float] = field(default_factory=list)
    initial_validation_loss: float = float("nan")

    def to_record(self, spec: NetworkSpec | None = None, config: TrainConfig | None = None) -> dict[str, Any]:
        rec: dict[str, Any] = {
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "best_validation_loss": self.best_validation_loss,
            "initial_validation_loss": self.initial_validation_loss,
            "success": self.success,
            "train_history": list(self.train_history),
            "validation_history": list(self.validation_history),
        }
        if config is not None:
            rec["config"] = train_config_to_dict(config)
            rec["seed"] = config.seed
        if spec is not None:
            rec["weights"] = weights_to_dict(spec, self.final_weights)
        return rec


_INT_FIELDS = ("max_epochs", "patience", "batch_size")
_FLOAT_FIELDS = ("validation_fraction", "learning_rate", "beta1", "beta2", "eps", "lam")
TRAIN_KEYS = frozenset(_INT_FIELDS + _FLOAT_FIELDS + ("regularizer",))


def _as_int(key: str, value: Any) -> int:
    number = float(value)
    if not number.is_integer():
        raise ValueError(f"{key} must be an integer, got {value!r}")
    return int(number)


def coerce_train_fields(fields: dict[str, Any]) -> dict[str, Any]:
    """Typed copy of config-file training keys (strings such as '1e-3' allowed).

    Raises ValueError on unknown keys or values that do not convert.
    """
    extra = set(fields) - TRAIN_KEYS
    if extra:
        raise ValueError(f"unknown train keys: {sorted(extra)}")
    out = dict(fields)
    for key, value in fields.items():
        if value is None or key == "regularizer":
            continue
        try:
            out[key] = _as_int(key, value) if key in _INT_FIELDS else float(value)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"train.{key}: {exc}") from exc
    return out


def train_config_to_dict(config: TrainConfig) -> dict[str, Any]:
    from .experiment import loss_to_config  # local: experiment imports this module

    obj = config.objective
    return {
        "max_epochs": config.max_epochs,
        "patience": config.patience,
        "validation_fraction": config.validation_fraction,
        "seed": config.seed,
        "learning_rate": config.learning_rate,
        "beta1": config.beta1,
        "beta2": config.beta2,
        "eps": config.eps,
        "batch_size": config.batch_size,
        "objective": {"loss": loss_to_config(obj.loss), "lam": obj.lam, "regularizer": obj.regularizer},
    }


@dataclass(frozen=True, eq=False)
class Split:
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    train_index: np.ndarray
    val_index: np.ndarray

    def class_counts(self) -> dict[str, dict[str, int]]:
        def counts(y):
            pos = int(np.sum(y == 1))
            return {"n": int(y.size), "n_pos": pos, "n_neg": int(y.size) - pos}

        return {"train": counts(self.train_y), "validation": counts(self.val_y)}


def _validation_size(n: int, fraction: float) -> int:
    # round half up, never empty
    return max(1, int(math.floor(n * fraction + 0.5)))


def split_validation(inputs, labels, fraction: float, seed: int) -> Split:
    """Seeded shuffle split into training and validation parts.

    Stratified by class when both classes have at least two members; the
    validation part has ``round(n * fraction)`` samples (at least one).
    """
    x = np.asarray(inputs, dtype=float)
    y = np.asarray(labels).astype(int)
    n = y.size
    if x.shape[0] != n:
        raise ValueError(f"{x.shape[0]} inputs but {n} labels")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    if n < 2:
        raise ValueError("need at least two samples to split")
    n_val = _validation_size(n, fraction)
    if n_val >= n:
        raise ValueError(f"validation part of {n_val} leaves no training samples")
    rng = np.random.default_rng(seed)

    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if pos.size >= 2 and neg.size >= 2:
        pos = rng.permutation(pos)
        neg = rng.permutation(neg)
        n_val_pos = int(round(n_val * pos.size / n))
        n_val_pos = min(max(n_val_pos, 1), pos.size - 1)
        n_val_neg = n_val - n_val_pos
        if not 1 <= n_val_neg <= neg.size - 1:
            n_val_neg = min(max(n_val_neg, 1), neg.size - 1)
            n_val_pos = n_val - n_val_neg
        val = np.concatenate([pos[:n_val_pos], neg[:n_val_neg]])
        train = np.concatenate([pos[n_val_pos:], neg[n_val_neg:]])
    else:
        perm = rng.permutation(n)
        val, train = perm[:n_val], perm[n_val:]
    val = np.sort(val)
    train = np.sort(train)
    return Split(x[train], y[train], x[val], y[val], train, val)


def _finite(value: float, what: str, epoch: int) -> float:
    if not math.isfinite(value):
        raise NumericalError(f"non-finite {what} ({value}) at epoch {epoch}")
    return value


def fit(
    spec: NetworkSpec,
    config: TrainConfig,
    inputs,
    labels,
    initial_weights: WeightSet | None = None,
) -> TrainReport:
    """Train until ``max_epochs`` or until validation loss stalls for ``patience`` epochs.

    Each epoch is one pass of Adam updates (full batch unless ``batch_size``
    is set), after which both the full training objective and the validation
    objective are logged. The returned weights are those of the best
    validation epoch. The run is flagged unsuccessful when the best
    validation loss improves on the first epoch's by less than a relative
    1e-4, i.e. the loss was stuck from the start.
    """
    split = split_validation(inputs, labels, config.validation_fraction, config.seed)
    rng = np.random.default_rng([config.seed, 1])
    weights = initial_weights.copy() if initial_weights is not None else init_weights(spec, rng)
    weights.check(spec)
    objective = config.objective
    opt = Adam(config.learning_rate, config.beta1, config.beta2, config.eps)

    n_train = split.train_y.size
    batch_size = config.batch_size or n_train
    init_val = _finite(objective_value(spec, weights, split.val_x, split.val_y, objective), "validation loss", 0)

    train_hist: list[float] = []
    val_hist: list[float] = []
    best_val = math.inf
    best_epoch = 0
    best_weights = weights
    since_best = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n_train) if batch_size < n_train else np.arange(n_train)
        for start in range(0, n_train, batch_size):
            idx = order[start : start + batch_size]
            grad = objective_gradient(spec, weights, split.train_x[idx], split.train_y[idx], objective)
            if not np.all(np.isfinite(grad.to_vector())):
                raise NumericalError(f"non-finite gradient at epoch {epoch}")
            weights = opt.step(weights, grad)
        train_hist.append(_finite(objective_value(spec, weights, split.train_x, split.train_y, objective), "training loss", epoch))
        val = _finite(objective_value(spec, weights, split.val_x, split.val_y, objective), "validation loss", epoch)
        val_hist.append(val)
        if val < best_val - IMPROVEMENT_TOLERANCE:
            best_val, best_epoch, best_weights = val, epoch, weights
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    first = val_hist[0]
    improvement = (first - best_val) / max(abs(first), 1e-12)
    success = improvement >= STUCK_TOLERANCE
    log.debug("fit: %d epochs, best %.6g at epoch %d, success=%s", len(val_hist), best_val, best_epoch, success)
    return TrainReport(
        epochs_run=len(val_hist),
        best_epoch=best_epoch,
        best_validation_loss=best_val,
        success=success,
        final_weights=best_weights,
        train_history=train_hist,
        validation_history=val_hist,
        initial_validation_loss=init_val,
    )

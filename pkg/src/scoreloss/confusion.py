"""Classical and expected confusion matrices of a prediction/label batch."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import ThresholdDistribution, cdf, pdf

__all__ = [
    "ENTRIES",
    "LabeledBatch",
    "ClassicalConfusion",
    "ExpectedConfusion",
    "classical_cm",
    "classical_cm_many",
    "expected_cm",
    "expected_cm_gradient",
]

ENTRIES = ("tn", "fp", "fn", "tp")


@dataclass(frozen=True, eq=False)
class LabeledBatch:
    """Model outputs in [0, 1] paired with binary ground-truth labels."""

    predictions: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        p = np.array(self.predictions, dtype=float).ravel()
        raw = np.asarray(self.labels).ravel()
        if p.size == 0:
            raise ValueError("batch must contain at least one sample")
        if raw.shape != p.shape:
            raise ValueError(f"{p.size} predictions but {raw.size} labels")
        if np.any(np.isnan(p)) or np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("predictions must lie in [0, 1]")
        if not np.all((raw == 0) | (raw == 1)):
            raise ValueError("labels must be 0 or 1")
        p.setflags(write=False)
        y = raw.astype(np.int8)
        y.setflags(write=False)
        object.__setattr__(self, "predictions", p)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return int(self.predictions.size)

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return self.n - self.n_pos

    def with_predictions(self, predictions) -> "LabeledBatch":
        return LabeledBatch(predictions, self.labels)


@dataclass(frozen=True)
class ClassicalConfusion:
    tn: int
    fp: int
    fn: int
    tp: int

    def as_array(self) -> np.ndarray:
        return np.array([self.tn, self.fp, self.fn, self.tp], dtype=float)

    def inf_norm(self) -> int:
        return max(self.tn + self.fp, self.fn + self.tp)


@dataclass(frozen=True)
class ExpectedConfusion:
    tn: float
    fp: float
    fn: float
    tp: float

    def as_array(self) -> np.ndarray:
        return np.array([self.tn, self.fp, self.fn, self.tp], dtype=float)

    def inf_norm(self) -> float:
        return max(self.tn + self.fp, self.fn + self.tp)


def classical_cm(batch: LabeledBatch, tau: float) -> ClassicalConfusion:
    """Confusion matrix at a fixed threshold.

    A sample is predicted positive iff its output is strictly above ``tau``;
    a tie ``prediction == tau`` is predicted negative so each sample lands in
    exactly one cell.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {tau}")
    above = batch.predictions > tau
    pos = batch.labels == 1
    tp = int(np.count_nonzero(above & pos))
    fp = int(np.count_nonzero(above & ~pos))
    return ClassicalConfusion(tn=batch.n_neg - fp, fp=fp, fn=batch.n_pos - tp, tp=tp)


def classical_cm_many(batch: LabeledBatch, taus) -> np.ndarray:
    """Classical matrices for many thresholds at once.

    Returns an array of shape ``(len(taus), 4)`` with columns (tn, fp, fn, tp).
    Uses sorted predictions per class, so cost is O((n + m) log n).
    """
    t = np.asarray(taus, dtype=float).ravel()
    pos = np.sort(batch.predictions[batch.labels == 1])
    neg = np.sort(batch.predictions[batch.labels == 0])
    # count of values <= tau, i.e. predicted negative under the tie rule
    fn = np.searchsorted(pos, t, side="right")
    tn = np.searchsorted(neg, t, side="right")
    out = np.empty((t.size, 4), dtype=float)
    out[:, 0] = tn
    out[:, 1] = neg.size - tn
    out[:, 2] = fn
    out[:, 3] = pos.size - fn
    return out


def expected_cm(batch: LabeledBatch, dist: ThresholdDistribution) -> ExpectedConfusion:
    """Entrywise expectation of the classical matrix over the random threshold."""
    F = cdf(dist, batch.predictions)
    pos = batch.labels == 1
    # np.sum is pairwise, keeping the row sums tight for large batches
    tp = float(np.sum(F[pos]))
    fp = float(np.sum(F[~pos]))
    fn = float(np.sum(1.0 - F[pos]))
    tn = float(np.sum(1.0 - F[~pos]))
    return ExpectedConfusion(tn=tn, fp=fp, fn=fn, tp=tp)


def expected_cm_gradient(batch: LabeledBatch, dist: ThresholdDistribution) -> np.ndarray:
    """Per-sample partials of the expected entries with respect to each prediction.

    Returns shape ``(n, 4)``, columns (tn, fp, fn, tp). Row ``i`` holds
    d entry / d prediction_i; only the cdf depends on the prediction.
    """
    f = np.asarray(pdf(dist, batch.predictions), dtype=float)
    y = batch.labels.astype(float)
    grad = np.empty((batch.n, 4))
    grad[:, 0] = -(1.0 - y) * f
    grad[:, 1] = (1.0 - y) * f
    grad[:, 2] = -y * f
    grad[:, 3] = y * f
    return grad

"""Skill scores on confusion matrices and the score-oriented losses built on them.

Every score is evaluated with the convention 0/0 := 0, which makes all four
scores total on nonnegative entries. Entry vectors are ordered
(tn, fp, fn, tp) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .confusion import (
    ClassicalConfusion,
    ExpectedConfusion,
    LabeledBatch,
    expected_cm,
    expected_cm_gradient,
)
from .distributions import ThresholdDistribution

__all__ = [
    "ScoreKind",
    "SolLoss",
    "score_from_entries",
    "score_value",
    "score_gradient_wrt_entries",
    "score_hessian_wrt_entries",
    "score_range",
    "sol_loss",
    "sol_loss_gradient",
]


class ScoreKind(str, Enum):
    ACCURACY = "accuracy"
    F1 = "f1"
    TSS = "tss"
    CSI = "csi"

    @classmethod
    def parse(cls, text: "str | ScoreKind") -> "ScoreKind":
        if isinstance(text, ScoreKind):
            return text
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown score {text!r}; expected one of {names}") from None

    @property
    def is_linear(self) -> bool:
        # linear once row sums are fixed, which holds on every matrix we build
        return self in (ScoreKind.ACCURACY, ScoreKind.TSS)


def _ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    zero = den == 0.0
    # nonnegative entries: a zero denominator forces a zero numerator
    assert np.all(num[zero] == 0.0), "nonzero numerator over zero denominator"
    return np.where(zero, 0.0, num / np.where(zero, 1.0, den))


def _unpack(entries):
    e = np.asarray(entries, dtype=float)
    if e.shape[-1] != 4:
        raise ValueError(f"expected (..., 4) entries, got shape {e.shape}")
    return e[..., 0], e[..., 1], e[..., 2], e[..., 3]


def score_from_entries(kind: ScoreKind, entries):
    """Score of one matrix (shape (4,)) or a stack of matrices (shape (m, 4))."""
    kind = ScoreKind.parse(kind)
    tn, fp, fn, tp = _unpack(entries)
    if kind is ScoreKind.ACCURACY:
        out = _ratio(tp + tn, tp + tn + fp + fn)
    elif kind is ScoreKind.F1:
        out = _ratio(2.0 * tp, 2.0 * tp + fp + fn)
    elif kind is ScoreKind.TSS:
        out = _ratio(tp, tp + fn) + _ratio(tn, tn + fp) - 1.0
    else:
        out = _ratio(tp, tp + fp + fn)
    return float(out) if np.ndim(out) == 0 else out


def score_value(kind: ScoreKind, cm: ClassicalConfusion | ExpectedConfusion) -> float:
    return float(score_from_entries(kind, cm.as_array()))


def score_range(kind: ScoreKind) -> tuple[float, float]:
    return (-1.0, 1.0) if ScoreKind.parse(kind) is ScoreKind.TSS else (0.0, 1.0)


def score_gradient_wrt_entries(kind: ScoreKind, entries) -> np.ndarray:
    """Analytic partial derivatives of the score with respect to (tn, fp, fn, tp).

    Partials whose quotient sits at the 0/0 point are defined as 0.
    Accepts one matrix or a stack; the output has the same shape.
    """
    kind = ScoreKind.parse(kind)
    tn, fp, fn, tp = _unpack(entries)
    grad = np.zeros(np.shape(entries), dtype=float)
    if kind is ScoreKind.ACCURACY:
        total2 = (tn + fp + fn + tp) ** 2
        wrong = _ratio(fp + fn, total2)
        right = _ratio(tn + tp, total2)
        grad[..., 0], grad[..., 1], grad[..., 2], grad[..., 3] = wrong, -right, -right, wrong
    elif kind is ScoreKind.F1:
        den2 = (2.0 * tp + fp + fn) ** 2
        grad[..., 1] = grad[..., 2] = -_ratio(2.0 * tp, den2)
        grad[..., 3] = _ratio(2.0 * (fp + fn), den2)
    elif kind is ScoreKind.TSS:
        pos2 = (tp + fn) ** 2
        neg2 = (tn + fp) ** 2
        grad[..., 0] = _ratio(fp, neg2)
        grad[..., 1] = -_ratio(tn, neg2)
        grad[..., 2] = -_ratio(tp, pos2)
        grad[..., 3] = _ratio(fn, pos2)
    else:
        den2 = (tp + fp + fn) ** 2
        grad[..., 1] = grad[..., 2] = -_ratio(tp, den2)
        grad[..., 3] = _ratio(fp + fn, den2)
    return grad


def score_hessian_wrt_entries(kind: ScoreKind, entries, step: float = 1e-5) -> np.ndarray:
    """4x4 Hessian by central differences of the analytic gradient (symmetrized)."""
    e = np.asarray(entries, dtype=float)
    hess = np.empty((4, 4))
    for j in range(4):
        h = step * max(1.0, abs(e[j]))
        up, down = e.copy(), e.copy()
        up[j] += h
        down[j] -= h
        hess[:, j] = (score_gradient_wrt_entries(kind, up) - score_gradient_wrt_entries(kind, down)) / (2 * h)
    return 0.5 * (hess + hess.T)


@dataclass(frozen=True)
class SolLoss:
    """Negative skill score evaluated on the expected confusion matrix."""

    score: ScoreKind
    dist: ThresholdDistribution

    def __post_init__(self):
        object.__setattr__(self, "score", ScoreKind.parse(self.score))

    def label(self) -> str:
        return f"{self.score.value.upper()} SOL ({self.dist.label()})"


def sol_loss(loss: SolLoss, batch: LabeledBatch) -> float:
    return -score_value(loss.score, expected_cm(batch, loss.dist))


def sol_loss_gradient(loss: SolLoss, batch: LabeledBatch) -> np.ndarray:
    """d loss / d prediction_i for every sample, by the chain rule through the entries."""
    cm = expected_cm(batch, loss.dist).as_array()
    ds_dentries = score_gradient_wrt_entries(loss.score, cm)
    dentries_dpred = expected_cm_gradient(batch, loss.dist)
    return -(dentries_dpred @ ds_dentries)

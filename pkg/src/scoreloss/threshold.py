"""A-posteriori threshold maximization and histograms of optimal thresholds."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .confusion import LabeledBatch, classical_cm_many
from .scores import ScoreKind, score_from_entries

__all__ = [
    "ThresholdSweepResult",
    "ThresholdHistogram",
    "sweep",
    "scores_at",
    "optimal_threshold_histogram",
]


@dataclass(frozen=True, eq=False)
class ThresholdSweepResult:
    tau_star: float
    best_score: float
    taus: np.ndarray
    scores: np.ndarray
    plateau: tuple[float, float]

    @property
    def score_curve(self) -> list[tuple[float, float]]:
        return list(zip(self.taus.tolist(), self.scores.tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau", "score"])
        for t, s in zip(self.taus, self.scores):
            w.writerow([repr(float(t)), repr(float(s))])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "tau_star": self.tau_star,
            "best_score": self.best_score,
            "plateau_left": self.plateau[0],
            "plateau_right": self.plateau[1],
        }


def scores_at(batch: LabeledBatch, kind: ScoreKind, taus) -> np.ndarray:
    """Classical score at each threshold in ``taus`` (vectorized)."""
    return np.atleast_1d(score_from_entries(kind, classical_cm_many(batch, taus)))


def sweep(batch: LabeledBatch, kind: ScoreKind) -> ThresholdSweepResult:
    """Exact maximization of the classical score over tau in (0, 1).

    The score only changes where tau crosses a prediction, so one candidate
    per piece suffices: midpoints of consecutive distinct predictions, plus
    ``min/2`` and ``(1 + max)/2`` for the two outer pieces. Among maximizing
    candidates, consecutive ones form a plateau; the midpoint of the widest
    plateau is reported.
    """
    kind = ScoreKind.parse(kind)
    u = np.unique(batch.predictions)
    left = np.concatenate([[0.0], u])
    right = np.concatenate([u, [1.0]])
    cand = 0.5 * (left + right)
    keep = (cand > 0.0) & (cand < 1.0) & (right > left)
    taus, left, right = cand[keep], left[keep], right[keep]
    scores = scores_at(batch, kind, taus)

    best = float(scores.max())
    is_best = scores == best
    best_span, best_width = None, -1.0
    i = 0
    while i < taus.size:
        if not is_best[i]:
            i += 1
            continue
        j = i
        while j + 1 < taus.size and is_best[j + 1]:
            j += 1
        width = right[j] - left[i]
        if width > best_width:
            best_span, best_width = (float(left[i]), float(right[j])), width
        i = j + 1
    tau_star = 0.5 * (best_span[0] + best_span[1])
    return ThresholdSweepResult(tau_star, best, taus, scores, best_span)


@dataclass(frozen=True, eq=False)
class ThresholdHistogram:
    edges: np.ndarray
    density: np.ndarray
    mean: float
    std: float
    count: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "density"])
        for lo, hi, d in zip(self.edges[:-1], self.edges[1:], self.density):
            w.writerow([repr(float(lo)), repr(float(hi)), repr(float(d))])
        return buf.getvalue()


def optimal_threshold_histogram(tau_stars, bins: int) -> ThresholdHistogram:
    """Normalized histogram of optimal thresholds over (0, 1), with mean and std.

    The standard deviation is the population one (ddof=0), so a single run
    reports 0.
    """
    t = np.asarray(tau_stars, dtype=float).ravel()
    if t.size == 0:
        raise ValueError("no thresholds to histogram")
    if bins < 1:
        raise ValueError("bins must be positive")
    if np.any(t <= 0.0) or np.any(t >= 1.0):
        raise ValueError("thresholds must lie in (0, 1)")
    density, edges = np.histogram(t, bins=bins, range=(0.0, 1.0), density=True)
    return ThresholdHistogram(edges, density, float(t.mean()), float(t.std()), int(t.size))

"""Monte-Carlo checks of the concentration, expectation and deviation results.

Every check draws thresholds from the distribution, forms the classical
confusion matrices at those thresholds and compares empirical quantities
against their closed-form counterparts. Acceptance is statistical: an
empirical quantity may exceed its bound by at most three standard errors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .confusion import ENTRIES, LabeledBatch, classical_cm_many, expected_cm
from .distributions import ThresholdDistribution, raised_cosine, sample, uniform
from .scores import (
    ScoreKind,
    score_from_entries,
    score_gradient_wrt_entries,
    score_hessian_wrt_entries,
)

__all__ = [
    "SIGMA",
    "BoundCheckReport",
    "ScoreExpectationReport",
    "TaylorReport",
    "MadBoundReport",
    "random_batch",
    "check_entry_concentration",
    "check_trace_concentration",
    "check_score_expectation",
    "check_score_tail",
    "score_range",
    "taylor_correction",
    "lipschitz_constant",
    "check_mad_bound",
    "default_suite",
    "REPORT_COLUMNS",
]

SIGMA = 3.0
MIN_DRAWS = 10_000
SCORE_EPSILONS = (0.0, 0.05, 0.1, 0.2, 0.3, 0.5)
REPORT_COLUMNS = ("check", "params", "lhs", "rhs", "stderr", "passed", "asserted")


def _params_text(params: dict[str, Any]) -> str:
    return json.dumps(params, sort_keys=True, separators=(",", ":"))


def _batch_params(batch: LabeledBatch, dist: ThresholdDistribution) -> dict[str, Any]:
    return {"n": batch.n, "n_pos": batch.n_pos, "dist": dist.to_config()}


def _draw_cms(batch, dist, mc_draws, rng) -> np.ndarray:
    if mc_draws < MIN_DRAWS:
        raise ValueError(f"need at least {MIN_DRAWS} Monte-Carlo draws, got {mc_draws}")
    return classical_cm_many(batch, sample(dist, rng, mc_draws))


def random_batch(rng: np.random.Generator, n_min: int = 10, n_max: int = 50, pos_rate: float = 0.5) -> LabeledBatch:
    """Uniform predictions with Bernoulli labels; both classes always present."""
    n = int(rng.integers(n_min, n_max + 1))
    while True:
        labels = (rng.random(n) < pos_rate).astype(int)
        if 0 < labels.sum() < n:
            break
    return LabeledBatch(rng.random(n), labels)


@dataclass(frozen=True)
class BoundCheckReport:
    check: str
    params: dict[str, Any]
    epsilon_grid: tuple[float, ...]
    empirical_tail: tuple[float, ...]
    stderr: tuple[float, ...]
    theoretical_bound: tuple[float, ...]

    @property
    def violated(self) -> tuple[bool, ...]:
        return tuple(
            t > b + SIGMA * s for t, b, s in zip(self.empirical_tail, self.theoretical_bound, self.stderr)
        )

    @property
    def passed(self) -> bool:
        return not any(self.violated)

    def rows(self) -> list[dict[str, Any]]:
        out = []
        for eps, tail, se, bound, bad in zip(
            self.epsilon_grid, self.empirical_tail, self.stderr, self.theoretical_bound, self.violated
        ):
            out.append(
                {
                    "check": self.check,
                    "params": _params_text({**self.params, "epsilon": eps}),
                    "lhs": tail,
                    "rhs": bound,
                    "stderr": se,
                    "passed": not bad,
                    "asserted": True,
                }
            )
        return out


def _hoeffding(eps: np.ndarray, spread_sq: float) -> np.ndarray:
    if spread_sq == 0.0:
        # the quantity is constant: any positive deviation has probability 0
        return np.where(eps > 0, 0.0, 2.0)
    return 2.0 * np.exp(-2.0 * eps**2 / spread_sq)


def _tail_report(check, params, deviations, eps_grid, spread_sq) -> BoundCheckReport:
    eps = np.asarray(eps_grid, dtype=float)
    if np.any(eps < 0):
        raise ValueError("epsilon values must be nonnegative")
    m = deviations.size
    tails = np.array([np.count_nonzero(np.abs(deviations) >= e) / m for e in eps])
    se = np.sqrt(tails * (1.0 - tails) / m)
    return BoundCheckReport(
        check,
        params,
        tuple(eps.tolist()),
        tuple(tails.tolist()),
        tuple(se.tolist()),
        tuple(_hoeffding(eps, spread_sq).tolist()),
    )


def check_entry_concentration(
    batch: LabeledBatch,
    dist: ThresholdDistribution,
    entry: str,
    epsilon_grid: Sequence[float],
    mc_draws: int,
    rng: np.random.Generator,
) -> BoundCheckReport:
    """Tail of one entry around its expectation versus 2 exp(-2 eps^2 / row^2)."""
    entry = entry.lower()
    if entry not in ENTRIES:
        raise ValueError(f"unknown entry {entry!r}")
    col = ENTRIES.index(entry)
    row = batch.n_neg if entry in ("tn", "fp") else batch.n_pos
    cms = _draw_cms(batch, dist, mc_draws, rng)
    dev = cms[:, col] - expected_cm(batch, dist).as_array()[col]
    params = {**_batch_params(batch, dist), "entry": entry, "draws": mc_draws}
    return _tail_report("entry_concentration", params, dev, epsilon_grid, float(row) ** 2)


def check_trace_concentration(
    batch: LabeledBatch,
    dist: ThresholdDistribution,
    epsilon_grid: Sequence[float],
    mc_draws: int,
    rng: np.random.Generator,
) -> BoundCheckReport:
    """Tail of tn + tp around its expectation versus 2 exp(-2 eps^2 / (n-^2 + n+^2))."""
    cms = _draw_cms(batch, dist, mc_draws, rng)
    ecm = expected_cm(batch, dist)
    dev = cms[:, 0] + cms[:, 3] - (ecm.tn + ecm.tp)
    params = {**_batch_params(batch, dist), "draws": mc_draws}
    spread_sq = float(batch.n_neg) ** 2 + float(batch.n_pos) ** 2
    return _tail_report("trace_concentration", params, dev, epsilon_grid, spread_sq)


@dataclass(frozen=True)
class ScoreExpectationReport:
    kind: ScoreKind
    params: dict[str, Any]
    mc_mean: float
    expected_score: float
    stderr: float
    asserted: bool

    @property
    def gap(self) -> float:
        return self.mc_mean - self.expected_score

    @property
    def within_noise(self) -> bool:
        if self.stderr == 0.0:
            return abs(self.gap) <= 1e-12
        return abs(self.gap) < SIGMA * self.stderr

    @property
    def passes(self) -> bool:
        return self.within_noise

    def rows(self) -> list[dict[str, Any]]:
        return [
            {
                "check": f"score_expectation_{self.kind.value}",
                "params": _params_text({**self.params, "asserted": self.asserted}),
                "lhs": self.mc_mean,
                "rhs": self.expected_score,
                "stderr": self.stderr,
                "passed": self.passes,
                "asserted": self.asserted,
            }
        ]


def check_score_expectation(
    batch: LabeledBatch,
    dist: ThresholdDistribution,
    kind: ScoreKind,
    mc_draws: int,
    rng: np.random.Generator,
) -> ScoreExpectationReport:
    """Monte-Carlo mean of the classical score against the score of the expected matrix.

    Equality is asserted only for scores that are linear on matrices with
    fixed row sums (accuracy, TSS).
    """
    kind = ScoreKind.parse(kind)
    s = np.atleast_1d(score_from_entries(kind, _draw_cms(batch, dist, mc_draws, rng)))
    expected = float(score_from_entries(kind, expected_cm(batch, dist).as_array()))
    return ScoreExpectationReport(
        kind,
        {**_batch_params(batch, dist), "draws": mc_draws},
        float(s.mean()),
        expected,
        float(s.std(ddof=1) / math.sqrt(s.size)),
        kind.is_linear,
    )


def score_range(batch: LabeledBatch, dist: ThresholdDistribution, kind: ScoreKind) -> tuple[float, float]:
    """Exact (min, max) of the classical score over thresholds in the support.

    The score is constant between consecutive distinct predictions, so one
    point per piece that meets the support is enough.
    """
    lo, hi = dist.support
    u = np.unique(batch.predictions)
    left = np.maximum(np.concatenate([[0.0], u]), lo)
    right = np.minimum(np.concatenate([u, [1.0]]), hi)
    keep = right > left
    values = np.atleast_1d(score_from_entries(kind, classical_cm_many(batch, 0.5 * (left[keep] + right[keep]))))
    return float(values.min()), float(values.max())


def check_score_tail(
    batch: LabeledBatch,
    dist: ThresholdDistribution,
    kind: ScoreKind,
    epsilon_grid: Sequence[float],
    mc_draws: int,
    rng: np.random.Generator,
) -> BoundCheckReport:
    """Tail of the classical score versus 2 exp(-2 eps^2 / (b - a)^2).

    ``[a, b]`` is the range the score takes as the threshold moves over the
    support. Linear scores are centered at the score of the expected matrix,
    which is their mean; nonlinear ones at the Monte-Carlo mean.
    """
    kind = ScoreKind.parse(kind)
    s = np.atleast_1d(score_from_entries(kind, _draw_cms(batch, dist, mc_draws, rng)))
    center = float(score_from_entries(kind, expected_cm(batch, dist).as_array())) if kind.is_linear else float(s.mean())
    a, b = score_range(batch, dist, kind)
    params = {**_batch_params(batch, dist), "kind": kind.value, "draws": mc_draws, "range": [a, b]}
    return _tail_report(f"score_tail_{kind.value}", params, s - center, epsilon_grid, (b - a) ** 2)


@dataclass(frozen=True)
class TaylorReport:
    kind: ScoreKind
    mc_mean: float
    expected_score: float
    first_order_term: float
    second_order_term: float
    stderr: float

    @property
    def zeroth_gap(self) -> float:
        return abs(self.mc_mean - self.expected_score)

    @property
    def first_order_gap(self) -> float:
        return abs(self.mc_mean - self.expected_score - self.first_order_term)

    @property
    def second_order_gap(self) -> float:
        return abs(self.mc_mean - self.expected_score - self.first_order_term - self.second_order_term)


def taylor_correction(
    batch: LabeledBatch,
    dist: ThresholdDistribution,
    kind: ScoreKind,
    mc_draws: int,
    rng: np.random.Generator,
) -> TaylorReport:
    """Expansion of the expected classical score around the expected matrix, to second order.

    The first-order term multiplies the gradient by the empirical mean
    deviation, which vanishes up to sampling noise. The second-order term is
    half the Hessian contracted with the empirical covariance of the entries.
    """
    kind = ScoreKind.parse(kind)
    cms = _draw_cms(batch, dist, mc_draws, rng)
    center = expected_cm(batch, dist).as_array()
    dev = cms - center
    s = np.atleast_1d(score_from_entries(kind, cms))
    grad = score_gradient_wrt_entries(kind, center)
    hess = score_hessian_wrt_entries(kind, center)
    second_moment = dev.T @ dev / dev.shape[0]
    return TaylorReport(
        kind,
        float(s.mean()),
        float(score_from_entries(kind, center)),
        float(grad @ dev.mean(axis=0)),
        float(0.5 * np.sum(hess * second_moment)),
        float(s.std(ddof=1) / math.sqrt(s.size)),
    )


def lipschitz_constant(
    kind: ScoreKind,
    batch: LabeledBatch,
    extra_matrices: np.ndarray | None = None,
    norm: str = "inf",
    lattice_step: int = 1,
) -> float:
    """Sup of the score-gradient norm over the matrices with the batch's row sums.

    Scans the integer lattice tn in [0, n-], tp in [0, n+] (every
    ``lattice_step``-th point, endpoints always included) together with any
    ``extra_matrices``. ``norm="inf"`` is the max-norm of the gradient;
    ``norm="l1"`` gives the constant that is dual to the max-norm distance
    between matrices.
    """
    kind = ScoreKind.parse(kind)
    n_neg, n_pos = batch.n_neg, batch.n_pos

    def axis(limit):
        pts = np.arange(0, limit + 1, max(1, int(lattice_step)))
        return np.union1d(pts, [limit]).astype(float)

    tn, tp = np.meshgrid(axis(n_neg), axis(n_pos), indexing="ij")
    tn, tp = tn.ravel(), tp.ravel()
    lattice = np.stack([tn, n_neg - tn, n_pos - tp, tp], axis=1)
    if extra_matrices is not None:
        lattice = np.vstack([lattice, np.asarray(extra_matrices, dtype=float).reshape(-1, 4)])
    grad = score_gradient_wrt_entries(kind, lattice)
    if norm == "inf":
        norms = np.abs(grad).max(axis=1)
    elif norm == "l1":
        norms = np.abs(grad).sum(axis=1)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return float(norms.max())


@dataclass(frozen=True)
class MadBoundReport:
    kind: ScoreKind
    params: dict[str, Any]
    lhs: float
    lipschitz: float
    j_f: float
    mad_tn: float
    mad_tp: float
    stderr: float

    @property
    def rhs(self) -> float:
        return 0.5 * self.lipschitz * (self.j_f + self.mad_tn + self.mad_tp)

    @property
    def passes(self) -> bool:
        # rounding slack: lhs == rhs exactly whenever one deviation dominates every draw
        slack = 1e-12 * max(1.0, abs(self.rhs))
        return self.lhs <= self.rhs + SIGMA * self.stderr + slack

    def rows(self, asserted: bool = True) -> list[dict[str, Any]]:
        return [
            {
                "check": f"mad_bound_{self.params['norm']}_{self.kind.value}",
                "params": _params_text({**self.params, "lipschitz": self.lipschitz, "asserted": asserted}),
                "lhs": self.lhs,
                "rhs": self.rhs,
                "stderr": self.stderr,
                "passed": self.passes,
                "asserted": asserted,
            }
        ]


def check_mad_bound(
    batch: LabeledBatch,
    dist: ThresholdDistribution,
    kind: ScoreKind,
    mc_draws: int,
    rng: np.random.Generator,
    norm: str = "inf",
) -> MadBoundReport:
    """Mean absolute deviation of the score against half the Lipschitz constant times
    (J_F + mad[TN] + mad[TP]).

    The standard error is that of the per-draw difference between the two
    sides, whose expectation is rhs - lhs.
    """
    kind = ScoreKind.parse(kind)
    cms = _draw_cms(batch, dist, mc_draws, rng)
    center = expected_cm(batch, dist).as_array()
    s = np.atleast_1d(score_from_entries(kind, cms))
    s_bar = float(score_from_entries(kind, center))
    observed = np.unique(np.vstack([cms, center]), axis=0)
    k_s = lipschitz_constant(kind, batch, observed, norm=norm)

    abs_tn = np.abs(cms[:, 0] - center[0])
    abs_tp = np.abs(cms[:, 3] - center[3])
    lhs_draws = np.abs(s - s_bar)
    rhs_draws = k_s * np.maximum(abs_tn, abs_tp)
    diff = rhs_draws - lhs_draws
    params = {**_batch_params(batch, dist), "draws": mc_draws, "norm": norm}
    return MadBoundReport(
        kind,
        params,
        float(lhs_draws.mean()),
        k_s,
        float(np.abs(abs_tn - abs_tp).mean()),
        float(abs_tn.mean()),
        float(abs_tp.mean()),
        float(diff.std(ddof=1) / math.sqrt(diff.size)),
    )


DEFAULT_EPSILONS = (0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 20.0)


@dataclass
class SuiteResult:
    rows: list[dict[str, Any]] = field(default_factory=list)

    @property
    def violations(self) -> int:
        # informational rows (nonlinear expectations, the max-norm constant) never count
        return sum(1 for r in self.rows if r["asserted"] and not r["passed"])

    @property
    def passed(self) -> bool:
        return self.violations == 0


def default_distributions() -> list[ThresholdDistribution]:
    return [uniform(), raised_cosine(0.5, 0.1), raised_cosine(0.3, 0.3)]


def default_suite(
    seed: int = 0,
    mc_draws: int = 100_000,
    n_batches: int = 3,
    epsilon_grid: Sequence[float] = DEFAULT_EPSILONS,
) -> SuiteResult:
    """All checks over seeded random batches and the three reference distributions.

    Each (batch, distribution, check) triple gets its own random stream
    derived from ``seed``, so the rows do not depend on evaluation order.
    """
    result = SuiteResult()
    batch_rng = np.random.default_rng([seed, 0])
    batches = [random_batch(batch_rng, 20, 50) for _ in range(n_batches)]
    for b, batch in enumerate(batches):
        for d, dist in enumerate(default_distributions()):
            counter = 0

            def stream():
                nonlocal counter
                counter += 1
                return np.random.default_rng([seed, 1, b, d, counter])

            for entry in ENTRIES:
                result.rows += check_entry_concentration(batch, dist, entry, epsilon_grid, mc_draws, stream()).rows()
            result.rows += check_trace_concentration(batch, dist, epsilon_grid, mc_draws, stream()).rows()
            for kind in ScoreKind:
                result.rows += check_score_expectation(batch, dist, kind, mc_draws, stream()).rows()
            for kind in ScoreKind:
                result.rows += check_score_tail(batch, dist, kind, SCORE_EPSILONS, mc_draws, stream()).rows()
            for kind in ScoreKind:
                rng = stream()
                result.rows += check_mad_bound(batch, dist, kind, mc_draws, rng, norm="l1").rows()
                # same draws, constant measured in the max-norm as originally stated
                rng = np.random.default_rng([seed, 1, b, d, counter])
                result.rows += check_mad_bound(batch, dist, kind, mc_draws, rng, norm="inf").rows(asserted=False)
    return result

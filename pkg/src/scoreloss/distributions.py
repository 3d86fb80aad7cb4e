"""Threshold distributions: uniform on (0, 1) and raised cosine C(mu, delta).

Both families are exposed through one immutable value type. All functions
accept scalars or arrays and are vectorized with numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

__all__ = [
    "DistributionKind",
    "ThresholdDistribution",
    "uniform",
    "raised_cosine",
    "pdf",
    "cdf",
    "cdf_derivative",
    "sample",
    "inverse_cdf",
    "raised_cosine_variance",
]

_BISECTION_TOL = 1e-12


class DistributionKind(str, Enum):
    UNIFORM = "uniform"
    RAISED_COSINE = "raised_cosine"


@dataclass(frozen=True)
class ThresholdDistribution:
    """Distribution of the random decision threshold.

    ``mu`` and ``delta`` are only meaningful for the raised cosine family,
    whose support ``[mu - delta, mu + delta]`` must lie inside ``[0, 1]``.
    """

    kind: DistributionKind
    mu: float | None = None
    delta: float | None = None

    def __post_init__(self):
        kind = DistributionKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is DistributionKind.UNIFORM:
            if self.mu is not None or self.delta is not None:
                raise ValueError("uniform distribution takes no parameters")
            return
        if self.mu is None or self.delta is None:
            raise ValueError("raised cosine needs both mu and delta")
        mu, delta = float(self.mu), float(self.delta)
        if not 0.0 < mu < 1.0:
            raise ValueError(f"mu must lie in (0, 1), got {mu}")
        if not delta > 0.0:
            raise ValueError(f"delta must be positive, got {delta}")
        # small slack so that e.g. mu=0.3, delta=0.3 is accepted despite rounding
        if mu - delta < -1e-12 or mu + delta > 1.0 + 1e-12:
            raise ValueError(f"support [{mu - delta}, {mu + delta}] leaves [0, 1]")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "delta", delta)

    @property
    def support(self) -> tuple[float, float]:
        if self.kind is DistributionKind.UNIFORM:
            return 0.0, 1.0
        return max(self.mu - self.delta, 0.0), min(self.mu + self.delta, 1.0)

    @property
    def mean(self) -> float:
        return 0.5 if self.kind is DistributionKind.UNIFORM else self.mu

    @property
    def variance(self) -> float:
        if self.kind is DistributionKind.UNIFORM:
            return 1.0 / 12.0
        return raised_cosine_variance(self.delta)

    def label(self) -> str:
        if self.kind is DistributionKind.UNIFORM:
            return "U"
        return f"C({self.mu:g},{self.delta:g})"

    def to_config(self) -> dict[str, Any]:
        if self.kind is DistributionKind.UNIFORM:
            return {"kind": "uniform"}
        return {"kind": "raised_cosine", "mu": self.mu, "delta": self.delta}

    @classmethod
    def from_config(cls, cfg: dict[str, Any]) -> "ThresholdDistribution":
        if not isinstance(cfg, dict) or "kind" not in cfg:
            raise ValueError(f"distribution config needs a 'kind' key: {cfg!r}")
        extra = set(cfg) - {"kind", "mu", "delta"}
        if extra:
            raise ValueError(f"unknown distribution keys: {sorted(extra)}")
        return cls(DistributionKind(cfg["kind"]), cfg.get("mu"), cfg.get("delta"))


def uniform() -> ThresholdDistribution:
    return ThresholdDistribution(DistributionKind.UNIFORM)


def raised_cosine(mu: float, delta: float) -> ThresholdDistribution:
    return ThresholdDistribution(DistributionKind.RAISED_COSINE, mu, delta)


def raised_cosine_variance(delta: float) -> float:
    return delta**2 * (math.pi**2 - 6.0) / (3.0 * math.pi**2)


def _check_domain(x):
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("threshold distribution evaluated outside [0, 1]")
    return arr


def _as_output(values: np.ndarray, like):
    return float(values) if np.ndim(like) == 0 else values


def pdf(dist: ThresholdDistribution, x):
    """Density of the threshold at ``x``; zero outside the support."""
    arr = _check_domain(x)
    if dist.kind is DistributionKind.UNIFORM:
        out = np.ones_like(arr)
    else:
        z = (arr - dist.mu) / dist.delta
        inside = np.abs(z) < 1.0
        out = np.where(inside, (1.0 + np.cos(np.pi * z)) / (2.0 * dist.delta), 0.0)
    return _as_output(out, x)


def cdf(dist: ThresholdDistribution, x):
    """Cumulative distribution of the threshold, exactly 0/1 off the support."""
    arr = _check_domain(x)
    if dist.kind is DistributionKind.UNIFORM:
        out = arr.copy()
    else:
        z = (arr - dist.mu) / dist.delta
        body = 0.5 * (1.0 + z + np.sin(np.pi * z) / np.pi)
        out = np.where(z <= -1.0, 0.0, np.where(z >= 1.0, 1.0, body))
    return _as_output(out, x)


def cdf_derivative(dist: ThresholdDistribution, x):
    """d cdf / dx, the factor backpropagation multiplies through."""
    return pdf(dist, x)


def inverse_cdf(dist: ThresholdDistribution, u):
    """Quantile function. Closed form for uniform, bisection for raised cosine."""
    q = np.asarray(u, dtype=float)
    if np.any(q < 0.0) or np.any(q > 1.0):
        raise ValueError("quantile level outside [0, 1]")
    if dist.kind is DistributionKind.UNIFORM:
        return _as_output(q.copy(), u)
    lo = np.full(q.shape, dist.support[0])
    hi = np.full(q.shape, dist.support[1])
    # halving the support width until it drops below the tolerance
    steps = int(math.ceil(math.log2((hi.max(initial=1.0) - lo.min(initial=0.0)) / _BISECTION_TOL))) + 1
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        below = cdf(dist, mid) < q
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return _as_output(0.5 * (lo + hi), u)


def sample(dist: ThresholdDistribution, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` i.i.d. thresholds by inverting the cdf at uniform deviates."""
    if int(count) != count or count < 1:
        raise ValueError(f"count must be a positive integer, got {count}")
    u = rng.random(int(count))
    return np.asarray(inverse_cdf(dist, u), dtype=float)

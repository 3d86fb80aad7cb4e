"""Fully-connected ReLU network with a sigmoid output unit, plus reverse-mode gradients.

Layers compute ``a_{k+1} = relu(a_k @ W_k + b_k)`` with the last layer passed
through a sigmoid instead. Gradients are hand-written backpropagation; the
loss enters only through d loss / d prediction, so any SOL or the binary
cross-entropy plugs into the same backward pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .confusion import LabeledBatch
from .scores import SolLoss, sol_loss, sol_loss_gradient

__all__ = [
    "NetworkSpec",
    "NumericalError",
    "WeightSet",
    "CrossEntropy",
    "ObjectiveSpec",
    "Adam",
    "sigmoid",
    "init_weights",
    "forward",
    "objective_value",
    "objective_gradient",
    "save_weights",
    "load_weights",
    "CHECKPOINT_FORMAT",
    "CHECKPOINT_VERSION",
]

CE_CLAMP = 1e-7
CHECKPOINT_FORMAT = "scoreloss-weights"
CHECKPOINT_VERSION = 1


class NumericalError(RuntimeError):
    """A forward pass, loss or gradient produced a non-finite value."""


@dataclass(frozen=True)
class NetworkSpec:
    """Layer widths from input dimension to the single sigmoid output."""

    layer_widths: tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be positive: {widths}")
        if widths[-1] != 1:
            raise ValueError("the output layer must have width 1")
        object.__setattr__(self, "layer_widths", widths)

    @classmethod
    def from_hidden(cls, input_dim: int, hidden: Sequence[int]) -> "NetworkSpec":
        return cls((input_dim, *hidden, 1))

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    def shapes(self) -> list[tuple[int, int]]:
        w = self.layer_widths
        return [(w[k], w[k + 1]) for k in range(self.n_layers)]


@dataclass(eq=False)
class WeightSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "WeightSet":
        return WeightSet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def to_vector(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def from_vector(self, vec: np.ndarray) -> "WeightSet":
        """New WeightSet with this one's shapes and values taken from ``vec``."""
        vec = np.asarray(vec, dtype=float)
        weights, biases, i = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(vec[i : i + w.size].reshape(w.shape).copy())
            i += w.size
            biases.append(vec[i : i + b.size].reshape(b.shape).copy())
            i += b.size
        if i != vec.size:
            raise ValueError(f"vector of size {vec.size} does not match {i} parameters")
        return WeightSet(weights, biases)

    def check(self, spec: NetworkSpec) -> None:
        if len(self.weights) != spec.n_layers or len(self.biases) != spec.n_layers:
            raise ValueError("weight set has the wrong number of layers")
        for k, (shape, w, b) in enumerate(zip(spec.shapes(), self.weights, self.biases)):
            if w.shape != shape or b.shape != (shape[1],):
                raise ValueError(f"layer {k}: got {w.shape}/{b.shape}, expected {shape}/({shape[1]},)")

    def allclose(self, other: "WeightSet", **kw) -> bool:
        return bool(np.allclose(self.to_vector(), other.to_vector(), **kw))

    def array_equal(self, other: "WeightSet") -> bool:
        return np.array_equal(self.to_vector(), other.to_vector())


@dataclass(frozen=True)
class CrossEntropy:
    """Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7]."""

    def label(self) -> str:
        return "CE"


Loss = Union[SolLoss, CrossEntropy]


@dataclass(frozen=True)
class ObjectiveSpec:
    """Loss plus ``lam * R(w)``; the L2 regularizer is the sum of squared weight-matrix entries."""

    loss: Loss
    lam: float = 0.0
    regularizer: str | None = None

    def __post_init__(self):
        if self.regularizer not in (None, "l2"):
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.regularizer is None and self.lam != 0:
            raise ValueError("lambda must be 0 without a regularizer")

    def label(self) -> str:
        return self.loss.label()


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_weights(spec: NetworkSpec, rng: np.random.Generator) -> WeightSet:
    """He-uniform for ReLU layers, Glorot-uniform for the sigmoid layer, zero biases."""
    weights, biases = [], []
    for k, (fan_in, fan_out) in enumerate(spec.shapes()):
        if k == spec.n_layers - 1:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        else:
            limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return WeightSet(weights, biases)


def _check_inputs(spec: NetworkSpec, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"inputs of shape {x.shape} do not match input width {spec.input_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs contain non-finite values")
    return x


def _forward_cached(spec, weights, x):
    pre, act = [], [x]
    a = x
    for k in range(spec.n_layers):
        z = a @ weights.weights[k] + weights.biases[k]
        pre.append(z)
        a = sigmoid(z) if k == spec.n_layers - 1 else np.maximum(z, 0.0)
        act.append(a)
    return pre, act


def forward(spec: NetworkSpec, weights: WeightSet, inputs) -> np.ndarray:
    weights.check(spec)
    x = _check_inputs(spec, inputs)
    _, act = _forward_cached(spec, weights, x)
    return act[-1][:, 0]


def _regularizer(objective: ObjectiveSpec, weights: WeightSet) -> float:
    if objective.regularizer is None:
        return 0.0
    return objective.lam * float(sum(np.sum(w * w) for w in weights.weights))


def _loss_and_dpred(loss: Loss, predictions: np.ndarray, labels: np.ndarray, need_grad: bool):
    if not np.all(np.isfinite(predictions)):
        raise NumericalError("network produced non-finite outputs")
    if isinstance(loss, CrossEntropy):
        y = labels.astype(float)
        p = np.clip(predictions, CE_CLAMP, 1.0 - CE_CLAMP)
        value = float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
        if not need_grad:
            return value, None
        inside = (predictions > CE_CLAMP) & (predictions < 1.0 - CE_CLAMP)
        dpred = np.where(inside, -(y / p - (1.0 - y) / (1.0 - p)) / y.size, 0.0)
        return value, dpred
    batch = LabeledBatch(predictions, labels)
    value = sol_loss(loss, batch)
    return value, (sol_loss_gradient(loss, batch) if need_grad else None)


def objective_value(spec, weights, inputs, labels, objective: ObjectiveSpec) -> float:
    preds = forward(spec, weights, inputs)
    value, _ = _loss_and_dpred(objective.loss, preds, np.asarray(labels), need_grad=False)
    return value + _regularizer(objective, weights)


def objective_gradient(spec, weights, inputs, labels, objective: ObjectiveSpec, return_value: bool = False):
    """Reverse-mode gradient of the objective, shaped like ``weights``.

    With ``return_value=True`` returns ``(value, gradient)`` from the same pass.
    """
    weights.check(spec)
    x = _check_inputs(spec, inputs)
    labels = np.asarray(labels)
    if labels.shape[0] != x.shape[0]:
        raise ValueError(f"{x.shape[0]} inputs but {labels.shape[0]} labels")
    pre, act = _forward_cached(spec, weights, x)
    preds = act[-1][:, 0]
    value, dpred = _loss_and_dpred(objective.loss, preds, labels, need_grad=True)

    grad_w: list[np.ndarray] = [None] * spec.n_layers  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * spec.n_layers  # type: ignore[list-item]
    delta = (dpred * preds * (1.0 - preds))[:, None]
    for k in range(spec.n_layers - 1, -1, -1):
        grad_w[k] = act[k].T @ delta
        grad_b[k] = delta.sum(axis=0)
        if k > 0:
            # relu'(0) := 0
            delta = (delta @ weights.weights[k].T) * (pre[k - 1] > 0.0)
    if objective.regularizer == "l2":
        for k in range(spec.n_layers):
            grad_w[k] = grad_w[k] + 2.0 * objective.lam * weights.weights[k]
    grad = WeightSet(grad_w, grad_b)
    if return_value:
        return value + _regularizer(objective, weights), grad
    return grad


@dataclass
class Adam:
    """Adam optimizer state over a WeightSet."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    _m: np.ndarray | None = field(default=None, repr=False)
    _v: np.ndarray | None = field(default=None, repr=False)

    def step(self, weights: WeightSet, grad: WeightSet) -> WeightSet:
        g = grad.to_vector()
        if self._m is None:
            self._m = np.zeros_like(g)
            self._v = np.zeros_like(g)
        self.t += 1
        self._m = self.beta1 * self._m + (1.0 - self.beta1) * g
        self._v = self.beta2 * self._v + (1.0 - self.beta2) * g * g
        m_hat = self._m / (1.0 - self.beta1**self.t)
        v_hat = self._v / (1.0 - self.beta2**self.t)
        return weights.from_vector(weights.to_vector() - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))


def weights_to_dict(spec: NetworkSpec, weights: WeightSet) -> dict:
    weights.check(spec)
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_widths": list(spec.layer_widths),
        "layers": [
            {
                "weight_shape": list(w.shape),
                # row-major, repr-exact floats
                "weight": [float(v) for v in w.ravel(order="C")],
                "bias": [float(v) for v in b],
            }
            for w, b in zip(weights.weights, weights.biases)
        ],
    }


def weights_from_dict(data: dict) -> tuple[NetworkSpec, WeightSet]:
    if data.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a scoreloss weight checkpoint")
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')}")
    spec = NetworkSpec(tuple(data["layer_widths"]))
    weights = [np.array(layer["weight"], dtype=float).reshape(layer["weight_shape"]) for layer in data["layers"]]
    biases = [np.array(layer["bias"], dtype=float) for layer in data["layers"]]
    ws = WeightSet(weights, biases)
    ws.check(spec)
    return spec, ws


def save_weights(path: str | Path, spec: NetworkSpec, weights: WeightSet) -> None:
    Path(path).write_text(json.dumps(weights_to_dict(spec, weights), indent=1) + "\n")


def load_weights(path: str | Path) -> tuple[NetworkSpec, WeightSet]:
    return weights_from_dict(json.loads(Path(path).read_text()))

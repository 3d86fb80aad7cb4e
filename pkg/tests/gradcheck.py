"""Central-difference gradient check shared by the network and acceptance tests."""

import numpy as np

from scoreloss.network import _forward_cached, objective_gradient, objective_value

STEP = 1e-5
# denominators below this are treated as this size: the difference quotient
# carries about eps * |loss| / STEP ~ 1e-11 of rounding noise
FLOOR = 1e-6


def _relu_mask(spec, weights, x):
    pre, _ = _forward_cached(spec, weights, x)
    return np.concatenate([(z > 0).ravel() for z in pre[:-1]]) if len(pre) > 1 else np.zeros(0, bool)


def relative_errors(spec, weights, x, y, objective, step=STEP, floor=FLOOR):
    """Per-coordinate relative error; NaN where a step crosses a ReLU kink."""
    grad = objective_gradient(spec, weights, x, y, objective).to_vector()
    base = weights.to_vector()
    mask = _relu_mask(spec, weights, x)
    out = np.full(base.size, np.nan)
    for i in range(base.size):
        up, down = base.copy(), base.copy()
        up[i] += step
        down[i] -= step
        w_up, w_down = weights.from_vector(up), weights.from_vector(down)
        if not (np.array_equal(_relu_mask(spec, w_up, x), mask) and np.array_equal(_relu_mask(spec, w_down, x), mask)):
            continue
        fd = (objective_value(spec, w_up, x, y, objective) - objective_value(spec, w_down, x, y, objective)) / (2 * step)
        out[i] = abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), floor)
    return out

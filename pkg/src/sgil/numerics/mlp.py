"""Two-layer perceptron used by the environment generators."""
from __future__ import annotations

import numpy as np

from . import ops
from .tape import ShapeError, value_of

ACTIVATIONS = {"relu": ops.relu, "sigmoid": ops.sigmoid, "identity": lambda x: x}


def init_mlp2(rng: np.random.Generator, in_dim: int, hidden: int) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases."""
    def glorot(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    return {
        "W1": glorot(in_dim, hidden),
        "b1": np.zeros(hidden),
        "W2": glorot(hidden, 1),
        "b2": np.zeros(1),
    }


def mlp2_forward(x, params: dict, activation: str = "relu"):
    """One logit per input row: ``W2 . act(W1 . x + b1) + b2``."""
    xv = value_of(x)
    w1 = value_of(params["W1"])
    if xv.ndim != 2 or xv.shape[1] != w1.shape[0]:
        raise ShapeError(f"mlp2 input width {xv.shape} vs W1 {w1.shape}")
    hidden = ACTIVATIONS[activation](ops.add(ops.matmul(x, params["W1"]), params["b1"]))
    out = ops.add(ops.matmul(hidden, params["W2"]), params["b2"])
    return ops.reshape(out, (xv.shape[0],))

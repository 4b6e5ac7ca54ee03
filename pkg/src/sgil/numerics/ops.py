"""Differentiable dense operations.

Every function accepts ``numpy`` arrays or :class:`Tensor` inputs.  When no
input is tracked the result is a plain array and nothing is recorded.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import expit

from .tape import ShapeError, Tensor, send, tape_of, value_of


def _track(out, inputs, backward):
    tape = tape_of(*inputs)
    if tape is None:
        return out
    return tape.record(out, inputs, backward)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    av, bv = value_of(a), value_of(b)
    out = av + bv

    def backward(g):
        send(a, _unbroadcast(g, av.shape))
        send(b, _unbroadcast(g, bv.shape))

    return _track(out, (a, b), backward)


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    out = av - bv

    def backward(g):
        send(a, _unbroadcast(g, av.shape))
        send(b, -_unbroadcast(g, bv.shape))

    return _track(out, (a, b), backward)


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    out = av * bv

    def backward(g):
        send(a, _unbroadcast(g * bv, av.shape))
        send(b, _unbroadcast(g * av, bv.shape))

    return _track(out, (a, b), backward)


def scale(x, c: float):
    out = value_of(x) * c
    return _track(out, (x,), lambda g: send(x, g * c))


def matmul(a, b):
    av, bv = value_of(a), value_of(b)
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul shapes {av.shape} and {bv.shape}")
    out = av @ bv

    def backward(g):
        send(a, g @ bv.T)
        send(b, av.T @ g)

    return _track(out, (a, b), backward)


def transpose(x):
    out = value_of(x).T
    return _track(out, (x,), lambda g: send(x, g.T))


def reshape(x, shape):
    xv = value_of(x)
    out = xv.reshape(shape)
    return _track(out, (x,), lambda g: send(x, g.reshape(xv.shape)))


def relu(x):
    xv = value_of(x)
    on = xv > 0
    return _track(np.where(on, xv, 0.0), (x,), lambda g: send(x, g * on))


def sigmoid(x):
    out = expit(value_of(x))
    return _track(out, (x,), lambda g: send(x, g * out * (1.0 - out)))


def log_sigmoid(x):
    xv = value_of(x)
    out = -np.logaddexp(0.0, -xv)
    return _track(out, (x,), lambda g: send(x, g * expit(-xv)))


def minimum(x, c: float):
    """Elementwise ``min(x, c)``; zero gradient where clamped."""
    xv = value_of(x)
    free = xv < c
    return _track(np.where(free, xv, c), (x,), lambda g: send(x, g * free))


def concat(xs: Sequence, axis: int = 0):
    vals = [value_of(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def backward(g):
        for x, part in zip(xs, np.split(g, bounds, axis=axis)):
            send(x, part)

    return _track(out, tuple(xs), backward)


def scatter_rows(g: np.ndarray, idx: np.ndarray, n: int) -> np.ndarray:
    """``out[idx[r]] += g[r]`` for every row ``r``, into ``n`` rows."""
    out = np.zeros((n,) + g.shape[1:])
    if idx.size == 0:
        return out
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
    out[sorted_idx[starts]] = np.add.reduceat(g[order], starts, axis=0)
    return out


def take_rows(x, idx, unique: bool = False):
    """Gather ``x[idx]`` along the first axis; repeated indices accumulate.

    Pass ``unique=True`` when ``idx`` has no repeats to skip the scatter-add.
    """
    xv = value_of(x)
    idx = np.asarray(idx, dtype=np.int64)
    out = xv[idx]

    def backward(g):
        if unique:
            full = np.zeros_like(xv)
            full[idx] = g
        else:
            full = scatter_rows(g, idx, xv.shape[0])
        send(x, full)

    return _track(out, (x,), backward)


def slice_rows(x, start: int, stop: int):
    xv = value_of(x)
    out = xv[start:stop]

    def backward(g):
        full = np.zeros_like(xv)
        full[start:stop] = g
        send(x, full)

    return _track(out, (x,), backward)


def total(x):
    xv = value_of(x)
    return _track(np.asarray(xv.sum()), (x,), lambda g: send(x, np.full_like(xv, float(g))))


def mean(x):
    xv = value_of(x)
    n = xv.size
    return _track(np.asarray(xv.sum() / n), (x,), lambda g: send(x, np.full_like(xv, float(g) / n)))


def sum_squares(x):
    xv = value_of(x)
    return _track(np.asarray(np.sum(xv * xv)), (x,), lambda g: send(x, 2.0 * float(g) * xv))


def stack(scalars: Sequence):
    out = np.array([float(value_of(s)) for s in scalars], dtype=np.float64)

    def backward(g):
        for s, gi in zip(scalars, g):
            send(s, np.asarray(gi))

    return _track(out, tuple(scalars), backward)


def variance(v):
    """Population variance of a 1-D vector."""
    vv = value_of(v)
    k = vv.size
    # shifting by an element keeps identical entries at exactly zero deviation
    shifted = vv - vv.reshape(-1)[0]
    dev = shifted - shifted.sum() / k
    out = np.asarray(np.sum(dev * dev) / k)
    return _track(out, (v,), lambda g: send(v, float(g) * 2.0 * dev / k))


def row_normalize(x, eps: float = 1e-12):
    """Scale each row to unit L2 norm; ``eps`` is added to the norm."""
    xv = value_of(x)
    norm = np.sqrt(np.sum(xv * xv, axis=1, keepdims=True))
    s = norm + eps
    out = xv / s
    safe = np.where(norm > 0, norm, 1.0)

    def backward(g):
        proj = np.sum(g * xv, axis=1, keepdims=True)
        send(x, g / s - xv * proj / (s * s * safe))

    return _track(out, (x,), backward)


def softmax_cross_entropy(logits, targets, exclude=None):
    """Mean over rows of ``-log softmax(logits[b])[targets[b]]``.

    ``exclude`` is an optional boolean mask of candidates removed from a
    row's normalizer; the target itself must never be excluded.
    """
    lv = value_of(logits)
    targets = np.asarray(targets, dtype=np.int64)
    b = lv.shape[0]
    rows = np.arange(b)
    work = lv if exclude is None else np.where(exclude, -np.inf, lv)
    if exclude is not None and exclude[rows, targets].any():
        raise ValueError("a target candidate is excluded")
    top = work.max(axis=1, keepdims=True)
    ex = np.exp(work - top)
    z = ex.sum(axis=1, keepdims=True)
    logz = np.log(z) + top
    out = np.asarray(np.sum(logz[:, 0] - lv[rows, targets]) / b)

    def backward(g):
        grad = ex / z
        grad[rows, targets] -= 1.0
        send(logits, grad * (float(g) / b))

    return _track(out, (logits,), backward)

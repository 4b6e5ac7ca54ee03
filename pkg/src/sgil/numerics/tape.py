"""Reverse-mode gradient tape over coarse-grained numpy operations.

A :class:`Tape` records every operation whose inputs are tracked, in
execution order.  Replaying that list backwards is a valid reverse
topological order, so :meth:`Tape.backward` visits each node once and
accumulates gradients into its parents.

Values that never touch a tape are plain ``numpy.ndarray`` objects; every
op in :mod:`sgil.numerics.ops` accepts either form, so the same model code
runs for training (tracked) and inference (untracked).
"""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    """A value recorded on a tape, with a gradient slot."""

    __slots__ = ("value", "grad", "tape", "name", "_backward", "_parents")

    def __init__(self, value, tape: "Tape", name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.tape = tape
        self.name = name
        self._backward: Callable[[np.ndarray], None] | None = None
        self._parents: tuple = ()

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, g) -> None:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != self.value.shape:
            raise ShapeError(f"gradient shape {g.shape} != value shape {self.value.shape} ({self.name})")
        # grads are never updated in place, so aliasing g is safe
        self.grad = g if self.grad is None else self.grad + g

    def __repr__(self):
        return f"Tensor(name={self.name!r}, shape={self.value.shape})"


class Tape:
    """Records operation nodes and runs the backward pass."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.params: dict[str, Tensor] = {}

    def param(self, value, name: str) -> Tensor:
        """Register a leaf whose gradient is wanted after :meth:`backward`."""
        t = Tensor(np.array(value, dtype=np.float64), self, name)
        self.params[name] = t
        return t

    def record(self, value, parents: Iterable, backward: Callable[[np.ndarray], None]) -> Tensor:
        node = Tensor(value, self)
        node._parents = tuple(parents)
        node._backward = backward
        self.nodes.append(node)
        return node

    def backward(self, root: Tensor, seed=None) -> None:
        if root.tape is not self:
            raise ValueError("root is not recorded on this tape")
        root.accumulate(np.ones_like(root.value) if seed is None else seed)
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)

    def zero_grad(self) -> None:
        for node in self.nodes:
            node.grad = None
        for p in self.params.values():
            p.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Gradients of every registered parameter (zeros where untouched)."""
        return {
            name: (p.grad if p.grad is not None else np.zeros_like(p.value))
            for name, p in self.params.items()
        }


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Tensor):
            return x.tape
    return None


def send(x, g) -> None:
    """Accumulate ``g`` into ``x`` if it is tracked."""
    if isinstance(x, Tensor):
        x.accumulate(g)

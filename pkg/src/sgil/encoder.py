"""LightGCN-S propagation over the joint user-item / user-user graph."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SocialGraph
from .numerics import ops
from .numerics.sparse import CsrMatrix, spmm, symmetric_normalize
from .numerics.tape import ShapeError, value_of


def init_tables(rng: np.random.Generator, num_users: int, num_items: int, dim: int, std: float = 0.01):
    return {
        "user_embedding": rng.normal(0.0, std, size=(num_users, dim)),
        "item_embedding": rng.normal(0.0, std, size=(num_items, dim)),
    }


@dataclass(frozen=True)
class HeteroLayout:
    """Fixed sparsity pattern of ``[[S, R], [R^T, 0]]``.

    Entry order before sorting is: social edges (canonical order), then R,
    then R^T.  ``order`` maps CSR slots back to that order.
    """

    num_users: int
    num_items: int
    num_social: int
    pattern: CsrMatrix
    order: np.ndarray

    @property
    def dim(self) -> int:
        return self.num_users + self.num_items

    def build(self, social_weights) -> CsrMatrix:
        """Adjacency with the given per-edge social weights (tracked or not)."""
        sw = value_of(social_weights)
        if sw.shape != (self.num_social,):
            raise ShapeError(f"expected {self.num_social} social weights, got {sw.shape}")
        n_inter = self.pattern.nnz - self.num_social
        full = ops.concat([social_weights, np.ones(n_inter)])
        return self.pattern.with_weights(ops.take_rows(full, self.order, unique=True))


def hetero_layout(social: SocialGraph | np.ndarray, train_pairs: np.ndarray, num_users: int, num_items: int) -> HeteroLayout:
    edges = social.edges if isinstance(social, SocialGraph) else np.asarray(social, dtype=np.int64).reshape(-1, 2)
    train_pairs = np.asarray(train_pairs, dtype=np.int64).reshape(-1, 2)
    if len(edges) and (edges.min() < 0 or edges.max() >= num_users):
        raise ShapeError("social edge outside the user block")
    if len(train_pairs) and (train_pairs[:, 0].max() >= num_users or train_pairs[:, 1].max() >= num_items):
        raise ShapeError("interaction outside the user/item blocks")
    u, i = train_pairs[:, 0], train_pairs[:, 1] + num_users
    rows = np.concatenate([edges[:, 0], u, i])
    cols = np.concatenate([edges[:, 1], i, u])
    pattern, order = CsrMatrix.from_coo(num_users + num_items, rows, cols)
    return HeteroLayout(num_users, num_items, len(edges), pattern, order)


def build_hetero_adjacency(social: SocialGraph, social_weights, train_pairs, num_users: int, num_items: int) -> CsrMatrix:
    return hetero_layout(social, train_pairs, num_users, num_items).build(social_weights)


def propagate(adj: CsrMatrix, user_table, item_table, layers: int = 3):
    """Run ``layers`` propagation steps and average the layer outputs.

    ``adj`` must already be normalized.  Returns ``(users, items)``.
    """
    num_users = value_of(user_table).shape[0]
    e = ops.concat([user_table, item_table])
    acc = e
    for _ in range(layers):
        e = spmm(adj, e)
        acc = ops.add(acc, e)
    out = ops.scale(acc, 1.0 / (layers + 1))
    n = value_of(out).shape[0]
    return ops.slice_rows(out, 0, num_users), ops.slice_rows(out, num_users, n)


def encode(layout: HeteroLayout, social_weights, user_table, item_table, layers: int = 3):
    """Build, normalize and propagate in one call."""
    return propagate(symmetric_normalize(layout.build(social_weights)), user_table, item_table, layers)

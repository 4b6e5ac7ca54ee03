"""Losses: in-batch softmax ERM, BPR, variance-penalized invariance, HSIC."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .data import InteractionStore, SocialGraph
from .numerics import ops
from .numerics.tape import send, tape_of, value_of


@dataclass
class Batch:
    """Positive (user, item) pairs; candidates are the batch's unique items."""

    users: np.ndarray
    items: np.ndarray
    candidate_items: np.ndarray
    targets: np.ndarray

    @classmethod
    def from_pairs(cls, pairs) -> "Batch":
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        cand, targets = np.unique(pairs[:, 1], return_inverse=True)
        return cls(pairs[:, 0], pairs[:, 1], cand, targets.reshape(-1))

    def __len__(self):
        return len(self.users)

    def exclusion_mask(self, train_items: list[np.ndarray]) -> np.ndarray:
        """True where a candidate is another train positive of the row's user."""
        mask = np.zeros((len(self), len(self.candidate_items)), dtype=bool)
        for b, (u, t) in enumerate(zip(self.users.tolist(), self.targets.tolist())):
            mask[b] = np.isin(self.candidate_items, train_items[u])
            mask[b, t] = False
        return mask


def scaled_cosine(user_rows, item_rows, tau: float):
    """``cos(p, q) / tau`` for every (user row, item row) combination."""
    return ops.scale(ops.matmul(ops.row_normalize(user_rows), ops.transpose(ops.row_normalize(item_rows))), 1.0 / tau)


def erm_softmax_loss(users_emb, items_emb, batch: Batch, tau: float = 0.2, exclude: np.ndarray | None = None):
    """Mean over positive pairs of ``-log softmax`` of scaled cosine scores
    against the batch's candidate items."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    logits = scaled_cosine(ops.take_rows(users_emb, batch.users),
                           ops.take_rows(items_emb, batch.candidate_items, unique=True), tau)
    return ops.softmax_cross_entropy(logits, batch.targets, exclude)


def sample_negatives(rng: np.random.Generator, users: np.ndarray, train_items: list[np.ndarray], num_items: int) -> np.ndarray:
    """One uniform item per user outside that user's train set."""
    out = rng.integers(0, num_items, size=len(users))
    for b, u in enumerate(users.tolist()):
        seen = train_items[u]
        if len(seen) >= num_items:
            raise ValueError(f"user {u} has interacted with every item")
        while np.any(seen == out[b]):
            out[b] = rng.integers(0, num_items)
    return out


def _pair_scores(users_emb, items_emb, users, items):
    return ops.matmul(
        ops.mul(ops.take_rows(users_emb, users), ops.take_rows(items_emb, items)),
        np.ones((value_of(users_emb).shape[1], 1)),
    )


def bpr_loss(users_emb, items_emb, triples, reg: float = 0.0, tables: tuple = ()):
    """``-sum log sigmoid(<p_a, q_i> - <p_a, q_j>) + reg * ||tables||^2``."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    pos = _pair_scores(users_emb, items_emb, triples[:, 0], triples[:, 1])
    neg = _pair_scores(users_emb, items_emb, triples[:, 0], triples[:, 2])
    loss = ops.scale(ops.total(ops.log_sigmoid(ops.sub(pos, neg))), -1.0)
    for t in tables:
        if reg:
            loss = ops.add(loss, ops.scale(ops.sum_squares(t), reg))
    return loss


def pointwise_loss(users_emb, items_emb, triples):
    """Binary cross-entropy on one positive and one sampled negative per row.

    Kept for ablation only; the training default is the in-batch softmax.
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    pos = _pair_scores(users_emb, items_emb, triples[:, 0], triples[:, 1])
    neg = _pair_scores(users_emb, items_emb, triples[:, 0], triples[:, 2])
    both = ops.add(ops.total(ops.log_sigmoid(pos)), ops.total(ops.log_sigmoid(ops.scale(neg, -1.0))))
    return ops.scale(both, -1.0 / len(triples))


def density_ratio(score, neg_ratio: float):
    """``C * p / (1 - p)`` with ``p = sigmoid(score)``; equals ``C * exp(score)``."""
    return neg_ratio * np.exp(np.asarray(score, dtype=np.float64))


@dataclass
class LossBreakdown:
    per_env: list
    mean: object
    variance: object
    total: object

    def row(self) -> list[float]:
        return [float(value_of(x)) for x in self.per_env] + [
            float(value_of(self.mean)), float(value_of(self.variance)), float(value_of(self.total))]


def invariance_objective(per_env_losses, beta: float) -> LossBreakdown:
    """``mean + beta * Var`` over environment losses (population variance)."""
    if not per_env_losses:
        raise ValueError("need at least one environment loss")
    v = ops.stack(per_env_losses)
    mean = ops.mean(v)
    var = ops.variance(v)
    return LossBreakdown(list(per_env_losses), mean, var, ops.add(mean, ops.scale(var, beta)))


# ------------------------------------------------------------------- HSIC

def _rbf(x: np.ndarray, sigma: float) -> np.ndarray:
    d = cdist(x, x, "sqeuclidean")
    return np.exp(-d / (2.0 * sigma * sigma))


def _center(k: np.ndarray) -> np.ndarray:
    return k - k.mean(axis=0, keepdims=True) - k.mean(axis=1, keepdims=True) + k.mean()


def hsic_rbf(x, y, sigma: float = 1.0):
    """Biased empirical HSIC ``(n-1)^-2 Tr(K_X H K_Y H)`` with RBF kernels.

    Differentiable in both inputs.
    """
    xv, yv = value_of(x), value_of(y)
    if xv.ndim == 1:
        xv = xv[:, None]
    if yv.ndim == 1:
        yv = yv[:, None]
    n = xv.shape[0]
    if n < 2 or yv.shape[0] != n:
        raise ValueError("hsic needs n >= 2 paired samples")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    kx, ky = _rbf(xv, sigma), _rbf(yv, sigma)
    cx, cy = _center(kx), _center(ky)
    c = 1.0 / (n - 1) ** 2
    # Tr(K_X H K_Y H) = <H K_X H, H K_Y H>; exactly zero if either side is constant
    out = np.asarray(c * np.sum(cx * cy))
    tape = tape_of(x, y)
    if tape is None:
        return out

    def grad_input(v, k, other_centered, g):
        gk = g * c * other_centered * k * (-1.0 / (2.0 * sigma * sigma))
        s = gk + gk.T
        return 2.0 * (s.sum(axis=1, keepdims=True) * v - s @ v)

    def backward(g):
        g = float(g)
        send(x, grad_input(xv, kx, cy, g).reshape(value_of(x).shape))
        send(y, grad_input(yv, ky, cx, g).reshape(value_of(y).shape))

    return tape.record(out, (x, y), backward)


# -------------------------------------------------------- rule-based filter

def jaccard(a: np.ndarray, b: np.ndarray) -> float:
    union = np.union1d(a, b).size
    return np.intersect1d(a, b).size / union if union else 0.0


def rule_based_filter(social: SocialGraph, store: InteractionStore, threshold: float) -> SocialGraph:
    """Keep edges whose endpoints' train item sets have Jaccard similarity >= threshold."""
    items = store.items_by_user("train")
    keep = [jaccard(items[a], items[b]) >= threshold for a, b in social.edges.tolist()]
    return SocialGraph(social.num_users, social.edges[np.array(keep, dtype=bool)] if len(keep) else social.edges)

"""CSR adjacency with differentiable edge weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .tape import ShapeError, Tensor, send, tape_of, value_of

# Edges per chunk when forming per-edge weight gradients.
_EDGE_CHUNK = 1 << 17
# Up to this many matrix entries the weight gradient goes through a dense G X^T.
_DENSE_LIMIT = 4_000_000


@dataclass(frozen=True)
class CsrMatrix:
    """Square CSR matrix whose weights may be a tracked :class:`Tensor`.

    The sparsity pattern (``row_offsets``, ``col_indices``) is constant; only
    ``edge_weights`` carries gradient.
    """

    dim: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    edge_weights: object

    def __post_init__(self):
        ro, ci = self.row_offsets, self.col_indices
        if ro.shape != (self.dim + 1,) or ro[0] != 0 or np.any(np.diff(ro) < 0):
            raise ShapeError("row_offsets must be monotone with length dim + 1")
        if ro[-1] != ci.size:
            raise ShapeError("row_offsets[-1] must equal nnz")
        if ci.size and (ci.min() < 0 or ci.max() >= self.dim):
            raise ShapeError("column index out of range")
        if value_of(self.edge_weights).shape != ci.shape:
            raise ShapeError("edge_weights must align with col_indices")

    @property
    def nnz(self) -> int:
        return int(self.col_indices.size)

    @property
    def row_indices(self) -> np.ndarray:
        return np.repeat(np.arange(self.dim, dtype=np.int64), np.diff(self.row_offsets))

    @property
    def weights(self) -> np.ndarray:
        return value_of(self.edge_weights)

    def with_weights(self, weights) -> "CsrMatrix":
        return CsrMatrix(self.dim, self.row_offsets, self.col_indices, weights)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.weights, self.col_indices, self.row_offsets), shape=(self.dim, self.dim))

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    @classmethod
    def from_coo(cls, dim: int, rows, cols, weights=None) -> tuple["CsrMatrix", np.ndarray]:
        """Build from coordinate triples.

        Returns the matrix and the permutation ``order`` such that CSR slot
        ``s`` holds input entry ``order[s]``.  Duplicate coordinates are
        rejected.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= dim or cols.min() < 0 or cols.max() >= dim):
            raise ShapeError("coordinate out of range")
        order = np.lexsort((cols, rows))
        r, c = rows[order], cols[order]
        if r.size > 1 and np.any((r[1:] == r[:-1]) & (c[1:] == c[:-1])):
            raise ShapeError("duplicate coordinates")
        offsets = np.zeros(dim + 1, dtype=np.int64)
        np.add.at(offsets, r + 1, 1)
        offsets = np.cumsum(offsets)
        w = np.ones(rows.size) if weights is None else np.asarray(weights, dtype=np.float64)[order]
        return cls(dim, offsets, c, w), order


def spmm(adj: CsrMatrix, x):
    """``y[i] = sum_j w_ij x[j]``, differentiable in ``x`` and the weights."""
    xv = value_of(x)
    if xv.ndim != 2 or xv.shape[0] != adj.dim:
        raise ShapeError(f"spmm: adjacency dim {adj.dim} vs input rows {xv.shape}")
    mat = adj.to_scipy()
    out = np.asarray(mat @ xv)
    weights = adj.edge_weights
    tape = tape_of(x, weights)
    if tape is None:
        return out

    def backward(g):
        send(x, np.asarray(mat.T @ g))
        if isinstance(weights, Tensor):
            weights.accumulate(_edge_dots(adj, g, xv))

    return tape.record(out, (x, weights), backward)


def _edge_dots(adj: CsrMatrix, g: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``<g[row_e], x[col_e]>`` for every stored entry ``e``."""
    rows, cols = adj.row_indices, adj.col_indices
    if adj.dim * adj.dim <= _DENSE_LIMIT:
        return (g @ x.T)[rows, cols]
    gw = np.empty(adj.nnz)
    for s in range(0, adj.nnz, _EDGE_CHUNK):
        e = slice(s, s + _EDGE_CHUNK)
        gw[e] = np.einsum("ij,ij->i", g[rows[e]], x[cols[e]])
    return gw


def _inv_sqrt(d: np.ndarray) -> np.ndarray:
    out = np.zeros_like(d)
    pos = d > 0
    out[pos] = 1.0 / np.sqrt(d[pos])
    return out


def symmetric_normalize(adj: CsrMatrix) -> CsrMatrix:
    """``w'_ij = w_ij / sqrt(d_i d_j)`` with ``d`` the weighted row sums.

    Zero-degree nodes get zero scaling, so their rows and columns vanish.
    The sparsity pattern is unchanged.
    """
    w = adj.edge_weights
    wv = value_of(w)
    if wv.size and wv.min() < 0:
        raise ValueError("edge weights must be nonnegative")
    rows, cols = adj.row_indices, adj.col_indices
    deg = np.bincount(rows, weights=wv, minlength=adj.dim)
    r = _inv_sqrt(deg)
    out = wv * r[rows] * r[cols]
    tape = tape_of(w)
    if tape is None:
        return adj.with_weights(out)

    def backward(g):
        gw = g * r[rows] * r[cols]
        # d r_k / d deg_k = -r_k^3 / 2
        t = g * wv
        g_r = np.bincount(rows, weights=t * r[cols], minlength=adj.dim)
        g_r += np.bincount(cols, weights=t * r[rows], minlength=adj.dim)
        g_deg = g_r * (-0.5 * r ** 3)
        gw += g_deg[rows]
        w.accumulate(gw)

    return adj.with_weights(tape.record(out, (w,), backward))

"""The expanding layer: per-ring mean neighbour features.

``expand(X, adj)[s, i]`` is the mean of ``X[j]`` over ``j`` in ring
``adj.rings[s]`` of vertex ``i``: one sparse sum over the membership
matrix per slot, then a division by the ring size.  A vertex whose ring
is empty gets a zero row.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import ShapeMismatchError
from .mesh import RingAdjacency


@dataclass(frozen=True, eq=False)
class ExpandedTensor:
    data: np.ndarray   # (R, n, m)
    rings: tuple[int, ...]

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[0] != len(self.rings):
            raise ShapeMismatchError(
                f"expanded data shape {self.data.shape} does not match rings {self.rings}"
            )
        object.__setattr__(self, "rings", tuple(int(r) for r in self.rings))

    @property
    def shape(self):
        return self.data.shape

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def _check_rows(X: np.ndarray, adj: RingAdjacency):
    if X.ndim != 2:
        raise ShapeMismatchError(f"expected an (n, m) feature matrix, got shape {X.shape}")
    if X.shape[0] != adj.n_vertices:
        raise ShapeMismatchError(
            f"feature matrix has {X.shape[0]} rows but adjacency covers {adj.n_vertices} vertices"
        )


def expand_array(X: np.ndarray, adj: RingAdjacency) -> np.ndarray:
    """Array-level expand: ``(n, m) -> (R, n, m)``."""
    X = np.asarray(X, dtype=np.float64)
    _check_rows(X, adj)
    out = np.empty((len(adj.rings), X.shape[0], X.shape[1]))
    for s, r in enumerate(adj.rings):
        op, counts = adj.summing(r)
        out[s] = (op @ X) / counts[:, None]
    return out


def expand_transpose(G: np.ndarray, adj: RingAdjacency) -> np.ndarray:
    """Adjoint of :func:`expand_array`: ``(R, n, m) -> (n, m)``."""
    if G.shape[0] != len(adj.rings):
        raise ShapeMismatchError(f"gradient has {G.shape[0]} slots, adjacency {len(adj.rings)}")
    out = np.zeros(G.shape[1:])
    for s, r in enumerate(adj.rings):
        op, counts = adj.summing(r)
        out += op.T @ (G[s] / counts[:, None])
    return out


def expand(X, adj: RingAdjacency) -> ExpandedTensor:
    """Expand an ``(n, m)`` feature matrix over the rings of ``adj``."""
    return ExpandedTensor(expand_array(np.asarray(X), adj), adj.rings)


def expand_slice(C: ExpandedTensor, wanted: Sequence[int]) -> ExpandedTensor:
    """Select ring slots of ``C`` in the order given by ``wanted``."""
    index = {r: s for s, r in enumerate(C.rings)}
    missing = [r for r in wanted if r not in index]
    if missing:
        raise KeyError(f"ring(s) {missing} not in expanded tensor rings {list(C.rings)}")
    return ExpandedTensor(C.data[[index[r] for r in wanted]], tuple(wanted))

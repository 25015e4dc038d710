"""Triangle meshes, vertex labels and ring-k neighbourhoods.

A ring-k neighbourhood of a vertex is the set of vertices at unweighted
edge distance exactly k.  It is computed by the level recurrence

    N_0(v) = {v}
    N_1(v) = N(v)
    N_k(v) = N(N_{k-1}(v)) \\ (N_{k-1}(v) | N_{k-2}(v))

which only needs the two previous levels because no vertex of N_{k-1}
touches N_{k-3} or anything further inside.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import MeshError

logger = logging.getLogger(__name__)

DEFAULT_RED_THRESHOLD = 0.6


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def edges_from_faces(faces: np.ndarray) -> np.ndarray:
    """Unique undirected edges ``(i, j)`` with ``i < j``, sorted lexicographically."""
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(faces) == 0:
        return np.empty((0, 2), dtype=np.int64)
    pairs = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    pairs.sort(axis=1)
    return np.unique(pairs, axis=0)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangle mesh.

    ``vertices`` is ``(n, 3)`` float, ``faces`` is ``(f, 3)`` int with 0-based
    indices and ``colors`` is ``None`` or ``(n, 3)`` floats in ``[0, 1]``.
    ``edges`` is derived from the faces.
    """

    vertices: np.ndarray
    faces: np.ndarray
    colors: np.ndarray | None = None
    edges: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=np.float64)
        faces = np.array(self.faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError(f"vertices must have shape (n, 3), got {vertices.shape}")
        if faces.size == 0:
            faces = faces.reshape(0, 3)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError(f"faces must have shape (f, 3), got {faces.shape}")
        n = len(vertices)
        if faces.size and (faces.min() < 0 or faces.max() >= n):
            raise MeshError(f"face index out of range [0, {n})")
        degenerate = (
            (faces[:, 0] == faces[:, 1])
            | (faces[:, 1] == faces[:, 2])
            | (faces[:, 0] == faces[:, 2])
        )
        if degenerate.any():
            raise MeshError(f"degenerate face at row {int(np.flatnonzero(degenerate)[0])}")
        if not np.isfinite(vertices).all():
            raise MeshError("non-finite vertex coordinate")
        colors = self.colors
        if colors is not None:
            colors = np.array(colors, dtype=np.float64)
            if colors.shape != (n, 3):
                raise MeshError(f"colors must have shape ({n}, 3), got {colors.shape}")
            colors = _readonly(colors)
        object.__setattr__(self, "vertices", _readonly(vertices))
        object.__setattr__(self, "faces", _readonly(faces))
        object.__setattr__(self, "colors", colors)
        object.__setattr__(self, "edges", _readonly(edges_from_faces(faces)))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency_matrix(self) -> sp.csr_matrix:
        """Symmetric 0/1 vertex adjacency as CSR (no self loops)."""
        cached = self.__dict__.get("_adjacency")
        if cached is None:
            n = self.n_vertices
            i, j = self.edges[:, 0], self.edges[:, 1]
            data = np.ones(2 * len(i), dtype=np.int32)
            cached = sp.csr_matrix(
                (data, (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n)
            )
            cached.sort_indices()
            object.__setattr__(self, "_adjacency", cached)
        return cached

    def neighbors(self, v: int) -> np.ndarray:
        """Ring-1 neighbours of ``v`` as a sorted index array."""
        self._check_vertex(v)
        a = self.adjacency_matrix()
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    def boundary_vertices(self) -> np.ndarray:
        """Boolean mask of vertices lying on an edge used by exactly one face."""
        f = self.faces
        pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        pairs.sort(axis=1)
        uniq, counts = np.unique(pairs, axis=0, return_counts=True)
        mask = np.zeros(self.n_vertices, dtype=bool)
        border = uniq[counts == 1]
        mask[border.ravel()] = True
        return mask

    def with_colors(self, colors) -> "Mesh":
        return Mesh(self.vertices, self.faces, colors)

    def _check_vertex(self, v: int):
        if not 0 <= v < self.n_vertices:
            raise IndexError(f"vertex {v} out of range [0, {self.n_vertices})")


def dedupe_faces(faces: np.ndarray) -> np.ndarray:
    """Drop faces that repeat an earlier face's vertex set (any winding)."""
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(faces) == 0:
        return faces
    key = np.sort(faces, axis=1)
    _, first = np.unique(key, axis=0, return_index=True)
    if len(first) < len(faces):
        logger.warning("dropping %d duplicate face(s)", len(faces) - len(first))
        faces = faces[np.sort(first)]
    return faces


def labels_from_colors(mesh: Mesh, red_threshold: float = DEFAULT_RED_THRESHOLD) -> np.ndarray:
    """Per-vertex {0, 1} labels from annotation colours.

    A vertex is positive when its red channel is at least ``red_threshold``
    and both green and blue are at most ``1 - red_threshold``.
    """
    if mesh.colors is None:
        raise MeshError("mesh has no vertex colors")
    c = mesh.colors
    lo = 1.0 - red_threshold
    red = (c[:, 0] >= red_threshold) & (c[:, 1] <= lo) & (c[:, 2] <= lo)
    return red.astype(np.int64)


def check_labels(labels, mesh: Mesh) -> np.ndarray:
    y = np.asarray(labels)
    if y.shape != (mesh.n_vertices,):
        raise MeshError(f"expected {mesh.n_vertices} labels, got shape {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise MeshError("labels must be 0 or 1")
    return y.astype(np.int64)


def ring_neighbors(mesh: Mesh, v: int, k: int) -> set[int]:
    """Vertices in ring ``k`` of vertex ``v`` (may be empty)."""
    mesh._check_vertex(v)
    if k < 0:
        raise ValueError("ring number must be >= 0")
    a = mesh.adjacency_matrix()
    indptr, indices = a.indptr, a.indices
    older: set[int] = set()
    current = {int(v)}
    for _ in range(k):
        reached = set()
        for u in current:
            reached.update(indices[indptr[u]:indptr[u + 1]].tolist())
        older, current = current, reached - current - older
        if not current:
            break
    return current


class RingAdjacency:
    """Per-ring sparse vertex membership.

    Slot ``s`` holds an ``n x n`` CSR matrix whose row ``i`` marks the
    vertices of ring ``rings[s]`` around vertex ``i``.  Row-normalised
    copies (each row summing to 1, empty rows left empty) are built lazily
    and cached.
    """

    def __init__(self, rings: Sequence[int], membership: Sequence[sp.csr_matrix]):
        rings = tuple(int(r) for r in rings)
        if len(rings) != len(membership):
            raise ValueError("one membership matrix per ring is required")
        if not rings:
            raise ValueError("at least one ring is required")
        shapes = {m.shape for m in membership}
        if len(shapes) != 1:
            raise ValueError("membership matrices must share one shape")
        self.rings = rings
        self._membership = {r: m for r, m in zip(rings, membership)}
        self._normalized: dict = {}
        self.n_vertices = next(iter(shapes))[0]

    def __repr__(self):
        return f"RingAdjacency(n_vertices={self.n_vertices}, rings={list(self.rings)})"

    def __contains__(self, ring: int) -> bool:
        return ring in self._membership

    def membership(self, ring: int) -> sp.csr_matrix:
        try:
            return self._membership[ring]
        except KeyError:
            raise KeyError(f"ring {ring} not in {list(self.rings)}") from None

    def ring_sizes(self, ring: int) -> np.ndarray:
        return np.diff(self.membership(ring).indptr)

    def neighbors(self, ring: int, v: int) -> np.ndarray:
        m = self.membership(ring)
        return m.indices[m.indptr[v]:m.indptr[v + 1]]

    def summing(self, ring: int) -> tuple[sp.csr_matrix, np.ndarray]:
        """Float 0/1 operator and its row counts (empty rows count as 1).

        ``(S @ X) / counts[:, None]`` is the ring mean.  Summing with unit
        weights and dividing once keeps the result independent of vertex
        numbering for exactly representable inputs.
        """
        key = ("sum", ring)
        cached = self._normalized.get(key)
        if cached is None:
            m = self.membership(ring)
            sizes = np.diff(m.indptr)
            op = sp.csr_matrix((np.ones(m.nnz), m.indices.copy(), m.indptr.copy()), shape=m.shape)
            cached = self._normalized[key] = (op, np.maximum(sizes, 1).astype(np.float64))
        return cached

    def normalized(self, ring: int) -> sp.csr_matrix:
        """Row-stochastic operator: ``(P @ X)[i]`` is the mean of ``X`` over the ring."""
        op = self._normalized.get(ring)
        if op is None:
            m = self.membership(ring)
            sizes = np.diff(m.indptr)
            weights = np.repeat(1.0 / np.maximum(sizes, 1), sizes)
            op = sp.csr_matrix((weights, m.indices.copy(), m.indptr.copy()), shape=m.shape)
            self._normalized[ring] = op
        return op

    def select(self, rings: Iterable[int]) -> "RingAdjacency":
        rings = list(rings)
        sub = RingAdjacency(rings, [self.membership(r) for r in rings])
        sub._normalized = self._normalized  # share the lazily built operators
        return sub

    def to_dense(self) -> np.ndarray:
        """Dense ``(R, n, n)`` 0/1 tensor.  Only sensible for small meshes."""
        return np.stack([self.membership(r).toarray() for r in self.rings]).astype(np.float64)


def ring_adjacency(mesh: Mesh, rings: Sequence[int]) -> RingAdjacency:
    """Build ring membership for every vertex and every requested ring.

    All vertices are advanced together: one sparse product per level
    replaces a per-vertex breadth-first search.
    """
    rings = [int(r) for r in rings]
    if not rings:
        raise ValueError("rings must be non-empty")
    if min(rings) < 0:
        raise ValueError("ring numbers must be >= 0")
    n = mesh.n_vertices
    a = mesh.adjacency_matrix()
    wanted = set(rings)
    levels: dict[int, sp.csr_matrix] = {}
    older = sp.csr_matrix((n, n), dtype=np.int32)
    current = sp.identity(n, dtype=np.int32, format="csr")
    levels[0] = current
    for k in range(1, max(rings) + 1):
        reached = current @ a
        reached.data[:] = 1
        nxt = reached - reached.multiply(current) - reached.multiply(older)
        nxt = sp.csr_matrix(nxt, dtype=np.int32)
        nxt.eliminate_zeros()
        nxt.sort_indices()
        older, current = current, nxt
        if k in wanted:
            levels[k] = current
    return RingAdjacency(rings, [levels[r].astype(np.int8) for r in rings])

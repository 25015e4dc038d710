from collections import deque

import numpy as np
import pytest
from scipy.spatial import Delaunay

from meshring.mesh import Mesh
from meshring.synth import grid_mesh, icosphere


def tetrahedron(edge=1.0):
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    v *= edge / (2 * np.sqrt(2))
    f = [(0, 1, 2), (0, 3, 1), (0, 2, 3), (1, 3, 2)]
    return Mesh(v, f)


def cube():
    v = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    f = []
    for a, b, c, d in quads:
        f += [(a, b, c), (a, c, d)]
    return Mesh(v, f)


def random_planar_mesh(rng, n):
    """Delaunay triangulation of ``n`` random points lifted onto a bumpy surface."""
    pts = rng.uniform(0, 1, size=(n, 2))
    tri = Delaunay(pts)
    z = 0.2 * np.sin(3 * pts[:, 0]) * np.cos(2 * pts[:, 1])
    return Mesh(np.column_stack([pts, z]), tri.simplices)


def bfs_levels(mesh, source, max_k):
    """Vertices at exact graph distance 0..max_k from ``source`` (plain BFS)."""
    nbrs = [set() for _ in range(mesh.n_vertices)]
    for a, b in mesh.edges.tolist():
        nbrs[a].add(b)
        nbrs[b].add(a)
    dist = {source: 0}
    q = deque([source])
    while q:
        u = q.popleft()
        if dist[u] == max_k:
            continue
        for w in nbrs[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                q.append(w)
    levels = [set() for _ in range(max_k + 1)]
    for v, d in dist.items():
        levels[d].add(v)
    return levels


@pytest.fixture
def tetra():
    return tetrahedron()


@pytest.fixture
def icosahedron():
    return Mesh(*icosphere(0))


@pytest.fixture
def unit_icosphere():
    return Mesh(*icosphere(3))


@pytest.fixture
def flat_grid():
    v, f = grid_mesh(9, 9, 0.5)
    return Mesh(v, f)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def numeric_grad(f, array, eps=1e-6, index=None):
    """Central differences of scalar ``f()`` w.r.t. ``array`` (modified in place).

    ``index`` restricts the check to a list of flat positions.
    """
    flat = array.reshape(-1)
    positions = range(flat.size) if index is None else index
    out = np.zeros(flat.size)
    for i in positions:
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        out[i] = (up - down) / (2 * eps)
    return out.reshape(array.shape)


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-300)

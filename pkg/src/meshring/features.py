"""Per-vertex geometric features.

Curvatures are discrete estimates:

* Gaussian curvature is the angle deficit divided by the mixed Voronoi
  area (deficit measured against 2*pi inside, pi on the boundary).
* Mean curvature is half the norm of the cotangent mean-curvature-normal
  vector, signed by its agreement with the area-weighted vertex normal
  (so an outward-oriented unit sphere has mean curvature +1).  Boundary
  vertices use the normal component only, which drops the in-plane pull
  of the missing outer fan.
* Principal curvatures follow as ``H +- sqrt(max(H**2 - K, 0))``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import ConfigError, MeshError
from .mesh import Mesh

logger = logging.getLogger(__name__)

COORDINATE_NAMES = ("x", "y", "z")
CURVATURE_NAMES = ("k_max", "k_min", "k_mean", "k_gauss")
DISTANCE_NAMES = ("d",)
CURVATURE_CLAMP = 50.0


class Curvatures(NamedTuple):
    k_max: np.ndarray
    k_min: np.ndarray
    k_mean: np.ndarray
    k_gauss: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.column_stack(self)


def face_geometry(mesh: Mesh):
    """Corner angles ``(f, 3)``, corner cotangents ``(f, 3)`` and face areas ``(f,)``."""
    p = mesh.vertices[mesh.faces]                     # (f, 3 corners, 3 xyz)
    u = np.roll(p, -1, axis=1) - p                    # corner c -> c+1
    w = np.roll(p, -2, axis=1) - p                    # corner c -> c+2
    cross = np.linalg.norm(np.cross(u, w), axis=2)
    dot = np.einsum("fcx,fcx->fc", u, w)
    angles = np.arctan2(cross, dot)
    with np.errstate(divide="ignore", invalid="ignore"):
        cot = np.where(cross > 0, dot / cross, 0.0)
    area = 0.5 * cross[:, 0]
    return angles, cot, area


def mixed_areas(mesh: Mesh, angles=None, cot=None, area=None) -> np.ndarray:
    """Mixed Voronoi area per vertex.

    Non-obtuse triangles contribute the true Voronoi region; an obtuse
    triangle gives half its area to the obtuse corner and a quarter to each
    other corner.
    """
    if angles is None:
        angles, cot, area = face_geometry(mesh)
    p = mesh.vertices[mesh.faces]
    # squared length of the edge from corner c to c+1 and from c to c+2
    len_next = np.sum((np.roll(p, -1, axis=1) - p) ** 2, axis=2)
    len_prev = np.sum((np.roll(p, -2, axis=1) - p) ** 2, axis=2)
    # the edge c->c+1 is opposite corner c+2, and c->c+2 opposite c+1
    voronoi = (len_next * np.roll(cot, -2, axis=1) + len_prev * np.roll(cot, -1, axis=1)) / 8.0
    obtuse = angles > np.pi / 2
    any_obtuse = obtuse.any(axis=1, keepdims=True)
    corner = np.where(
        any_obtuse,
        np.where(obtuse, area[:, None] / 2.0, area[:, None] / 4.0),
        voronoi,
    )
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.faces.ravel(), corner.ravel())
    return out


def vertex_normals(mesh: Mesh) -> np.ndarray:
    """Area-weighted unit vertex normals (zero for isolated vertices)."""
    p = mesh.vertices[mesh.faces]
    fn = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    n = np.zeros_like(mesh.vertices)
    for c in range(3):
        np.add.at(n, mesh.faces[:, c], fn)
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)


def laplace_beltrami(mesh: Mesh, cot=None, areas=None) -> np.ndarray:
    """Cotangent mean-curvature-normal vector per vertex (``2 H n``)."""
    if cot is None:
        _, cot, _ = face_geometry(mesh)
    if areas is None:
        areas = mixed_areas(mesh)
    f = mesh.faces
    x = mesh.vertices
    acc = np.zeros_like(x)
    for c in range(3):
        i, j = f[:, c], f[:, (c + 1) % 3]
        wgt = cot[:, (c + 2) % 3][:, None]
        d = x[i] - x[j]
        np.add.at(acc, i, wgt * d)
        np.add.at(acc, j, -wgt * d)
    return np.divide(acc, 2.0 * areas[:, None], out=np.zeros_like(acc), where=areas[:, None] > 0)


def curvatures(mesh: Mesh) -> Curvatures:
    """Principal, mean and Gaussian curvature estimates for every vertex."""
    angles, cot, area = face_geometry(mesh)
    areas = mixed_areas(mesh, angles, cot, area)
    n = mesh.n_vertices
    angle_sum = np.zeros(n)
    np.add.at(angle_sum, mesh.faces.ravel(), angles.ravel())
    boundary = mesh.boundary_vertices()
    has_faces = np.zeros(n, dtype=bool)
    has_faces[mesh.faces.ravel()] = True

    good = areas > 0
    bad = has_faces & ~good
    if bad.any():
        logger.warning("%d vertex(es) with zero mixed area; curvature set to 0", int(bad.sum()))

    reference = np.where(boundary, np.pi, 2.0 * np.pi)
    k_gauss = np.divide(reference - angle_sum, areas, out=np.zeros(n), where=good)

    mc_normal = laplace_beltrami(mesh, cot, areas)
    normals = vertex_normals(mesh)
    along = np.einsum("ij,ij->i", mc_normal, normals)
    magnitude = np.linalg.norm(mc_normal, axis=1)
    k_mean = np.where(boundary, along, np.copysign(magnitude, along)) / 2.0
    k_mean = np.where(good, k_mean, 0.0)

    spread = np.sqrt(np.maximum(k_mean ** 2 - k_gauss, 0.0))
    return Curvatures(k_mean + spread, k_mean - spread, k_mean, k_gauss)


def mean_neighbor_distance(mesh: Mesh, v: int) -> float:
    """Mean Euclidean distance from ``v`` to its ring-1 neighbours (0 if isolated)."""
    nbrs = mesh.neighbors(v)
    if len(nbrs) == 0:
        logger.warning("vertex %d has no neighbours; distance set to 0", v)
        return 0.0
    return float(np.linalg.norm(mesh.vertices[nbrs] - mesh.vertices[v], axis=1).mean())


def mean_neighbor_distances(mesh: Mesh) -> np.ndarray:
    """Vectorised :func:`mean_neighbor_distance` over all vertices."""
    e = mesh.edges
    n = mesh.n_vertices
    length = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    total = np.bincount(e.ravel(), weights=np.repeat(length, 2), minlength=n)
    degree = np.bincount(e.ravel(), minlength=n)
    if (degree == 0).any():
        logger.warning("%d isolated vertex(es); distance set to 0", int((degree == 0).sum()))
    return np.divide(total, degree, out=np.zeros(n), where=degree > 0)


@dataclass(frozen=True)
class FeatureSelection:
    """Which feature groups to compute.

    Only the three combinations used for training are accepted: coordinates
    alone (m=3), curvatures with distance (m=5), or everything (m=8).
    """

    coordinates: bool = False
    curvatures: bool = True
    distance: bool = True

    def __post_init__(self):
        if not (self.coordinates or self.curvatures or self.distance):
            raise ConfigError("select at least one feature group")
        if self.curvatures != self.distance:
            raise ConfigError(
                "feature selection must be one of xyz, curv+dist or all (m in {3, 5, 8})"
            )

    @property
    def names(self) -> tuple[str, ...]:
        names: tuple[str, ...] = ()
        if self.coordinates:
            names += COORDINATE_NAMES
        if self.curvatures:
            names += CURVATURE_NAMES
        if self.distance:
            names += DISTANCE_NAMES
        return names

    @property
    def n_features(self) -> int:
        return len(self.names)

    @classmethod
    def parse(cls, text: str) -> "FeatureSelection":
        """Parse ``xyz``, ``curv+dist`` or ``all`` (``+``-joined groups also work)."""
        if isinstance(text, FeatureSelection):
            return text
        text = text.strip().lower()
        if text == "all":
            return cls(True, True, True)
        groups = {g.strip() for g in text.split("+") if g.strip()}
        known = {"xyz": "coordinates", "coords": "coordinates", "curv": "curvatures",
                 "curvatures": "curvatures", "dist": "distance", "d": "distance"}
        unknown = groups - known.keys()
        if unknown:
            raise ConfigError(f"unknown feature group(s): {sorted(unknown)}")
        flags = {known[g] for g in groups}
        return cls("coordinates" in flags, "curvatures" in flags, "distance" in flags)

    def __str__(self):
        if self.coordinates and self.curvatures:
            return "all"
        return "xyz" if self.coordinates else "curv+dist"


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    data: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != len(self.feature_names):
            raise MeshError(f"feature matrix shape {data.shape} does not match {self.feature_names}")
        if not np.isfinite(data).all():
            raise MeshError("feature matrix contains non-finite values")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def shape(self):
        return self.data.shape

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def _zscore(col: np.ndarray) -> np.ndarray:
    col = col - col.mean()
    std = col.std()
    return col / std if std > 0 else col


def assemble_features(mesh: Mesh, sel: FeatureSelection | str = "curv+dist",
                      standardize: bool = True) -> FeatureMatrix:
    """Feature matrix with columns ``x y z | k_max k_min k_mean k_gauss | d``.

    Curvatures are clamped to +-50 before per-mesh z-scoring; the distance
    column is z-scored; coordinates are centred on the centroid but not
    rescaled.  ``standardize=False`` returns the raw (clamped) values.
    """
    sel = FeatureSelection.parse(sel) if isinstance(sel, str) else sel
    cols = []
    if sel.coordinates:
        xyz = mesh.vertices
        cols.append(xyz - xyz.mean(axis=0) if standardize else xyz)
    if sel.curvatures:
        curv = np.clip(curvatures(mesh).as_array(), -CURVATURE_CLAMP, CURVATURE_CLAMP)
        if standardize:
            curv = np.column_stack([_zscore(c) for c in curv.T])
        cols.append(curv)
    if sel.distance:
        d = mean_neighbor_distances(mesh)
        cols.append((_zscore(d) if standardize else d)[:, None])
    return FeatureMatrix(np.hstack(cols), sel.names)

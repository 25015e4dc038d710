"""Input checks shared by the estimator API and the CLI."""
from __future__ import annotations

import os
from typing import Sequence

import numpy as np

from .dataset import MeshSample
from .exceptions import MeshError
from .mesh import Mesh, check_labels, labels_from_colors
from .objio import parse_obj


def check_mesh(obj) -> Mesh:
    """Coerce a :class:`Mesh`, :class:`MeshSample` or OBJ path into a mesh."""
    if isinstance(obj, Mesh):
        return obj
    if isinstance(obj, MeshSample):
        return obj.mesh
    if isinstance(obj, (str, os.PathLike)):
        return parse_obj(obj)
    raise TypeError(f"expected a Mesh, MeshSample or OBJ path, got {type(obj).__name__}")


def check_mesh_list(X) -> list[Mesh]:
    if isinstance(X, (Mesh, MeshSample, str, os.PathLike)):
        raise TypeError("expected a sequence of meshes; wrap a single mesh in a list")
    meshes = [check_mesh(m) for m in X]
    if not meshes:
        raise ValueError("at least one mesh is required")
    return meshes


def check_label_list(y, meshes: Sequence[Mesh]) -> list[np.ndarray]:
    """Per-mesh label vectors; ``y=None`` reads labels from vertex colours."""
    if y is None:
        try:
            return [labels_from_colors(m) for m in meshes]
        except MeshError:
            raise MeshError("y is None and a mesh carries no annotation colors") from None
    if len(y) != len(meshes):
        raise MeshError(f"got {len(y)} label vectors for {len(meshes)} meshes")
    return [check_labels(labels, m) for labels, m in zip(y, meshes)]


def check_features(X, n_rows: int | None = None, n_cols: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got {X.ndim}-D")
    if n_rows is not None and X.shape[0] != n_rows:
        raise ValueError(f"expected {n_rows} rows, got {X.shape[0]}")
    if n_cols is not None and X.shape[1] != n_cols:
        raise ValueError(f"expected {n_cols} columns, got {X.shape[1]}")
    if not np.isfinite(X).all():
        raise ValueError("feature matrix contains NaN or inf")
    return X

"""Collections of labelled meshes with cached features and ring adjacency."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import MeshError
from .features import FeatureMatrix, FeatureSelection, assemble_features
from .mesh import Mesh, RingAdjacency, check_labels, labels_from_colors, ring_adjacency
from .objio import parse_obj

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class MeshSample:
    """One mesh, its labels and lazily computed model inputs.

    When ``path`` is set and ``persist`` is true, features and ring
    membership are written next to the mesh file and reused on later loads.
    """

    name: str
    mesh: Mesh
    labels: np.ndarray | None = None
    path: Path | None = None
    seed: int | None = None
    persist: bool = False
    _features: dict = field(default_factory=dict, repr=False)
    _adjacency: RingAdjacency | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.labels is not None:
            self.labels = check_labels(self.labels, self.mesh)

    @property
    def n_vertices(self) -> int:
        return self.mesh.n_vertices

    def _cache_path(self, suffix: str) -> Path | None:
        if self.path is None or not self.persist:
            return None
        p = Path(self.path)
        return p.with_name(p.name + suffix)

    def features(self, sel: FeatureSelection) -> FeatureMatrix:
        key = str(sel)
        fm = self._features.get(key)
        if fm is not None:
            return fm
        cache = self._cache_path(f".features-{key.replace('+', '-')}.npy")
        if cache is not None and cache.exists() and cache.stat().st_mtime >= Path(self.path).stat().st_mtime:
            data = np.load(cache)
            if data.shape == (self.n_vertices, sel.n_features):
                fm = FeatureMatrix(data, sel.names)
        if fm is None:
            fm = assemble_features(self.mesh, sel)
            if cache is not None:
                np.save(cache, fm.data)
        self._features[key] = fm
        return fm

    def adjacency(self, rings: Iterable[int]) -> RingAdjacency:
        rings = sorted(set(int(r) for r in rings) | {0})
        have = self._adjacency
        if have is not None and all(r in have for r in rings):
            return have
        cache = self._cache_path(".rings.npz")
        if have is None and cache is not None and cache.exists():
            have = _load_rings(cache, self.n_vertices)
            if all(r in have for r in rings):
                self._adjacency = have
                return have
        if have is not None:
            rings = sorted(set(rings) | set(have.rings))
        adj = ring_adjacency(self.mesh, rings)
        self._adjacency = adj
        if cache is not None:
            _save_rings(cache, adj)
        return adj


def _save_rings(path: Path, adj: RingAdjacency) -> None:
    arrays = {"rings": np.array(adj.rings)}
    for r in adj.rings:
        m = adj.membership(r)
        arrays[f"indptr_{r}"] = m.indptr
        arrays[f"indices_{r}"] = m.indices
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def _load_rings(path: Path, n: int) -> RingAdjacency:
    with np.load(path) as z:
        rings = [int(r) for r in z["rings"]]
        mats = []
        for r in rings:
            indices = z[f"indices_{r}"]
            mats.append(sp.csr_matrix(
                (np.ones(len(indices), dtype=np.int8), indices, z[f"indptr_{r}"]), shape=(n, n)))
    return RingAdjacency(rings, mats)


@dataclass
class Dataset:
    split: str
    samples: list[MeshSample]

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    @property
    def positive_fraction(self) -> float:
        pos = sum(int(s.labels.sum()) for s in self.samples if s.labels is not None)
        tot = sum(s.n_vertices for s in self.samples if s.labels is not None)
        return pos / tot if tot else 0.0

    def prepare(self, sel: FeatureSelection, rings: Sequence[int]) -> None:
        """Compute (or load) features and ring adjacency for every sample."""
        for s in self.samples:
            s.features(sel)
            if rings:
                s.adjacency(rings)

    @classmethod
    def from_meshes(cls, split: str, meshes: Sequence[Mesh], labels=None) -> "Dataset":
        samples = []
        for i, mesh in enumerate(meshes):
            y = labels[i] if labels is not None else None
            samples.append(MeshSample(name=f"{split}/{i}", mesh=mesh, labels=y))
        return cls(split, samples)


def load_split(data_dir, split: str, persist_cache: bool = True) -> Dataset:
    """Load one split of a generated dataset directory (see :mod:`meshring.synth`)."""
    from .synth import load_manifest

    data_dir = Path(data_dir)
    manifest = load_manifest(data_dir)
    entries = manifest["splits"].get(split)
    if entries is None:
        raise MeshError(f"split {split!r} not in manifest (have {sorted(manifest['splits'])})")
    samples = []
    for entry in entries:
        path = data_dir / entry["file"]
        mesh = parse_obj(path)
        samples.append(MeshSample(
            name=entry["file"], mesh=mesh, labels=labels_from_colors(mesh),
            path=path, seed=entry.get("seed"), persist=persist_cache,
        ))
    return Dataset(split, samples)

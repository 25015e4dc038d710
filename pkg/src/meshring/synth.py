"""Labelled synthetic meshes standing in for annotated scans.

Two surface families are available:

``ridged_heightfield``
    A jittered grid whose height is ``-sum_i a_i * |dist_i|`` for a few
    random lines, producing sharp ridges.  Positives are vertices within
    ``ridge_width`` grid spacings of any ridge line.

``bumpy_sphere``
    An icosphere with Gaussian bumps.  Positives lie within
    ``ridge_width`` edge lengths of each bump's inflection circle.

Labels come from the parametric construction (before jitter), never from
estimated curvature.  Ridges/bumps are added until the positive fraction
reaches ``min_positive_fraction``; the defaults land between 0.2 and 0.3.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset, MeshSample
from .exceptions import ConfigError
from .mesh import Mesh

logger = logging.getLogger(__name__)

FAMILIES = ("ridged_heightfield", "bumpy_sphere")
MAX_VERTICES = 6000
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    vertex_budget: int = 1600
    family: str = "ridged_heightfield"
    ridge_width: float = 1.5
    noise: float = 0.05
    size: float = 10.0
    min_positive_fraction: float = 0.2
    n_bumps: int | None = None
    bump_sigma: float = 0.5
    bump_height: float = 0.25

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if not 12 <= self.vertex_budget <= MAX_VERTICES:
            raise ConfigError(f"vertex_budget must be in [12, {MAX_VERTICES}]")
        if self.ridge_width < 1:
            raise ConfigError("ridge_width must be >= 1")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synth config key(s): {sorted(unknown)}")
        return cls(**d)


def grid_mesh(nx: int, ny: int, spacing: float = 1.0):
    """Vertices ``(nx*ny, 3)`` on z=0 and counter-clockwise faces of a regular grid."""
    xs, ys = np.meshgrid(np.arange(nx) * spacing, np.arange(ny) * spacing, indexing="xy")
    vertices = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(nx * ny)])
    idx = np.arange(nx * ny).reshape(ny, nx)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    # alternate the diagonal so the triangulation has no global bias
    flip = ((np.arange(ny - 1)[:, None] + np.arange(nx - 1)[None, :]) % 2).ravel().astype(bool)
    t1 = np.where(flip[:, None], np.column_stack([a, b, d]), np.column_stack([a, b, c]))
    t2 = np.where(flip[:, None], np.column_stack([b, c, d]), np.column_stack([a, c, d]))
    return vertices, np.concatenate([t1, t2])


def icosphere(subdivisions: int = 0, radius: float = 1.0):
    """Vertices and outward-oriented faces of a subdivided icosahedron."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts) * radius, np.array(faces, dtype=np.int64)


def icosphere_vertex_count(subdivisions: int) -> int:
    return 10 * 4 ** subdivisions + 2


def _ridged_heightfield(cfg: SynthConfig, rng: np.random.Generator):
    g = int(np.floor(np.sqrt(cfg.vertex_budget)))
    if g < 2 * int(np.ceil(cfg.ridge_width)) + 3:
        raise ConfigError(f"vertex budget {cfg.vertex_budget} too small for ridge width {cfg.ridge_width}")
    h = cfg.size / (g - 1)
    base, faces = grid_mesh(g, g, h)
    xy = base[:, :2]
    height = np.zeros(len(xy))
    near = np.zeros(len(xy), dtype=bool)
    n_ridges = 0
    while near.mean() < cfg.min_positive_fraction and n_ridges < 8:
        centre = rng.uniform(0.25, 0.75, size=2) * cfg.size
        theta = rng.uniform(0.0, np.pi)
        normal = np.array([np.cos(theta), np.sin(theta)])
        dist = (xy - centre) @ normal
        slope = rng.uniform(0.3, 0.8)
        height -= slope * np.abs(dist)
        near |= np.abs(dist) <= cfg.ridge_width * h
        n_ridges += 1
    vertices = np.column_stack([xy, height])
    if cfg.noise > 0:
        vertices = vertices + rng.uniform(-1.0, 1.0, size=vertices.shape) * cfg.noise * h
    return vertices, faces, near.astype(np.int64)


def _bumpy_sphere(cfg: SynthConfig, rng: np.random.Generator):
    level = 0
    while icosphere_vertex_count(level + 1) <= cfg.vertex_budget:
        level += 1
    unit, faces = icosphere(level)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]]])
    edge_angle = float(np.mean(np.arccos(np.clip(np.sum(unit[e[:, 0]] * unit[e[:, 1]], axis=1), -1, 1))))
    sigma = cfg.bump_sigma
    if sigma < (cfg.ridge_width + 1) * edge_angle:
        raise ConfigError(
            f"vertex budget {cfg.vertex_budget} too coarse for bumps of width {sigma} rad"
        )
    band = cfg.ridge_width * edge_angle
    radius = np.ones(len(unit))
    near = np.zeros(len(unit), dtype=bool)
    centres: list[np.ndarray] = []
    target = cfg.n_bumps
    attempts = 0
    while attempts < 500:
        if target is not None and len(centres) >= target:
            break
        if target is None and (near.mean() >= cfg.min_positive_fraction or len(centres) >= 12):
            break
        attempts += 1
        c = rng.normal(size=3)
        c /= np.linalg.norm(c)
        if any(np.arccos(np.clip(c @ o, -1, 1)) < 2.6 * sigma for o in centres):
            continue
        centres.append(c)
        theta = np.arccos(np.clip(unit @ c, -1.0, 1.0))
        radius += cfg.bump_height * np.exp(-theta ** 2 / (2 * sigma ** 2))
        near |= np.abs(theta - sigma) <= band
    if target is not None and len(centres) < target:
        raise ConfigError(f"could not place {target} separated bumps on this sphere")
    scale = cfg.size / 2.0
    vertices = unit * radius[:, None] * scale
    if cfg.noise > 0:
        vertices = vertices + rng.uniform(-1.0, 1.0, size=vertices.shape) * cfg.noise * edge_angle * scale
    return vertices, faces, near.astype(np.int64)


def generate(config: SynthConfig) -> tuple[Mesh, np.ndarray]:
    """Return ``(mesh, labels)`` for ``config``; identical configs give identical output."""
    rng = np.random.default_rng(config.seed)
    if config.family == "ridged_heightfield":
        vertices, faces, labels = _ridged_heightfield(config, rng)
    else:
        vertices, faces, labels = _bumpy_sphere(config, rng)
    return Mesh(vertices, faces), labels


def split_seeds(master_seed: int, counts: dict[str, int]) -> dict[str, list[int]]:
    """Distinct per-mesh seeds for every split, derived from one master seed."""
    total = sum(counts.values())
    rng = np.random.default_rng(master_seed)
    seeds = rng.choice(2 ** 31 - 1, size=total, replace=False).tolist()
    out, start = {}, 0
    for split, k in counts.items():
        out[split] = [int(s) for s in seeds[start:start + k]]
        start += k
    return out


def generate_dataset(config: SynthConfig, counts=(40, 10, 10), out_dir=None) -> dict[str, Dataset]:
    """Generate train/val/test splits.

    ``counts`` is a ``(train, val, test)`` tuple or a ``{split: count}``
    mapping.  With ``out_dir`` the meshes are written as coloured OBJ files
    (positives red, the rest gray) next to a JSON manifest.
    """
    from .training import label_colors  # local: training imports this module's siblings
    from .objio import write_obj

    if not isinstance(counts, dict):
        counts = dict(zip(("train", "val", "test"), counts))
    seeds = split_seeds(config.seed, counts)
    manifest = {"format": "meshring-dataset", "version": 1, "config": asdict(config), "splits": {}}
    datasets = {}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    for split, split_seed_list in seeds.items():
        samples, entries = [], []
        for i, s in enumerate(split_seed_list):
            mesh, labels = generate(_with_seed(config, s))
            name = f"{split}/mesh_{i:04d}.obj"
            path = None
            if out_dir is not None:
                path = out_dir / name
                path.parent.mkdir(parents=True, exist_ok=True)
                write_obj(mesh, path, label_colors(labels))
            samples.append(MeshSample(name=name, mesh=mesh, labels=labels, path=path, seed=s))
            entries.append({"file": name, "seed": s, "n_vertices": mesh.n_vertices,
                            "n_positive": int(labels.sum())})
        manifest["splits"][split] = entries
        datasets[split] = Dataset(split, samples)
    if out_dir is not None:
        with open(out_dir / MANIFEST_NAME, "w") as fh:
            json.dump(manifest, fh, indent=2)
    return datasets


def _with_seed(config: SynthConfig, seed: int) -> SynthConfig:
    d = asdict(config)
    d["seed"] = seed
    return SynthConfig(**d)


def load_manifest(data_dir) -> dict:
    path = Path(data_dir) / MANIFEST_NAME
    if not os.path.exists(path):
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {data_dir}")
    with open(path) as fh:
        return json.load(fh)

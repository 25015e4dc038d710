import json

import numpy as np
import pytest

from meshring.dataset import load_split
from meshring.exceptions import ConfigError
from meshring.features import curvatures
from meshring.synth import (
    SynthConfig, generate, generate_dataset, grid_mesh, icosphere, icosphere_vertex_count, load_manifest,
    split_seeds,
)


@pytest.mark.parametrize("family", ["ridged_heightfield", "bumpy_sphere"])
def test_deterministic(family):
    a, ya = generate(SynthConfig(seed=4, family=family))
    b, yb = generate(SynthConfig(seed=4, family=family))
    np.testing.assert_array_equal(a.vertices, b.vertices)
    np.testing.assert_array_equal(a.faces, b.faces)
    np.testing.assert_array_equal(ya, yb)
    c, _ = generate(SynthConfig(seed=5, family=family))
    assert not np.array_equal(a.vertices, c.vertices)


@pytest.mark.parametrize("seed", range(5))
def test_crease_curvature_contrast(seed):
    mesh, y = generate(SynthConfig(seed=seed, noise=0.0))
    k = np.abs(curvatures(mesh).k_max)
    interior = ~mesh.boundary_vertices()
    assert np.median(k[(y == 1) & interior]) >= 5 * np.median(k[y == 0])


@pytest.mark.parametrize("family", ["ridged_heightfield", "bumpy_sphere"])
@pytest.mark.parametrize("seed", range(8))
def test_default_positive_fraction(family, seed):
    _, y = generate(SynthConfig(seed=seed, family=family))
    assert 0.2 <= y.mean() <= 0.3


@pytest.mark.parametrize("family", ["ridged_heightfield", "bumpy_sphere"])
def test_vertex_budget_respected(family):
    for budget in (700, 1600, 6000):
        mesh, y = generate(SynthConfig(family=family, vertex_budget=budget))
        assert mesh.n_vertices <= budget and len(y) == mesh.n_vertices


@pytest.mark.parametrize("kw", [dict(vertex_budget=11), dict(vertex_budget=6001), dict(ridge_width=0.5),
                                dict(family="torus"), dict(noise=-1)])
def test_invalid_config(kw):
    with pytest.raises(ConfigError):
        SynthConfig(**kw)


def test_budget_too_small_for_bumps():
    with pytest.raises(ConfigError):
        generate(SynthConfig(family="bumpy_sphere", vertex_budget=50))


def test_from_dict_rejects_unknown():
    with pytest.raises(ConfigError):
        SynthConfig.from_dict({"seed": 1, "colour": "red"})


def test_grid_and_icosphere_shapes():
    v, f = grid_mesh(4, 3, 2.0)
    assert v.shape == (12, 3) and f.shape == (12, 3)
    assert v[:, 0].max() == 6.0
    for level in range(4):
        v, f = icosphere(level)
        assert len(v) == icosphere_vertex_count(level)
        np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0)
        # outward orientation: face normal agrees with the centroid direction
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        assert np.all(np.sum(n * v[f].mean(axis=1), axis=1) > 0)


def test_split_seeds_distinct():
    seeds = split_seeds(3, {"train": 40, "val": 10, "test": 10})
    flat = sum(seeds.values(), [])
    assert len(flat) == len(set(flat)) == 60
    assert split_seeds(3, {"train": 40, "val": 10, "test": 10}) == seeds


def test_generate_dataset_on_disk(tmp_path):
    cfg = SynthConfig(seed=9, vertex_budget=300)
    sets = generate_dataset(cfg, (4, 2, 2), tmp_path)
    assert {k: len(v) for k, v in sets.items()} == {"train": 4, "val": 2, "test": 2}
    manifest = load_manifest(tmp_path)
    seeds = [e["seed"] for entries in manifest["splits"].values() for e in entries]
    assert len(set(seeds)) == 8
    again = tmp_path / "again"
    generate_dataset(cfg, (4, 2, 2), again)
    assert json.loads((again / "manifest.json").read_text()) == manifest

    loaded = load_split(tmp_path, "train")
    for a, b in zip(loaded, sets["train"]):
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.mesh.vertices, b.mesh.vertices)

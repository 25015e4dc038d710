"""Acceptance checks, one per criterion.

Each test prints a single ``PASS``/``FAIL`` line (visible even under
pytest's output capture) and then asserts.  Run the file directly with
``python tests/test_acceptance.py`` to get just the summary lines.
"""
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy.sparse.csgraph import shortest_path
from scipy.spatial.transform import Rotation

sys.path.insert(0, str(Path(__file__).parent))

from conftest import random_planar_mesh, rel_err  # noqa: E402
from meshring import nn  # noqa: E402
from meshring.architectures import custom, instantiate, preset  # noqa: E402
from meshring.cli import TRAIN_DEFAULTS  # noqa: E402
from meshring.features import curvatures, mean_neighbor_distances  # noqa: E402
from meshring.mesh import Mesh, labels_from_colors, ring_adjacency, ring_neighbors  # noqa: E402
from meshring.objio import parse_obj  # noqa: E402
from meshring.synth import SynthConfig, generate, generate_dataset, grid_mesh, icosphere  # noqa: E402
from meshring.training import MetricsReport, evaluate, export_colored_mesh, train  # noqa: E402


def report(number, title, ok, detail, capsys=None):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title} | {detail}"
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)
    return ok


def graph_distances(mesh):
    return shortest_path(mesh.adjacency_matrix(), unweighted=True, directed=False)


def random_meshes(count, lo, hi, seed):
    """Mix of lifted Delaunay patches, jittered grids and small spheres."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = int(rng.integers(lo, hi + 1))
        kind = i % 4
        if kind == 3 and n >= 42:
            level = 2 if n >= 162 else 1
            v, f = icosphere(level)
            out.append(Mesh(v + rng.normal(scale=0.01, size=v.shape), f))
        elif kind == 2 and n >= 12:
            nx = max(3, int(math.sqrt(n)))
            v, f = grid_mesh(nx, max(3, n // nx))
            out.append(Mesh(v + rng.normal(scale=0.05, size=v.shape), f))
        else:
            out.append(random_planar_mesh(rng, n))
    return out


# -- 1 -------------------------------------------------------------------


def check_ring_recurrence(capsys=None):
    meshes = random_meshes(200, 12, 500, seed=1)
    t0 = time.perf_counter()
    adjs = [ring_adjacency(m, range(9)) for m in meshes]
    elapsed = time.perf_counter() - t0
    mismatches = 0
    for mesh, adj in zip(meshes, adjs):
        dist = graph_distances(mesh)
        for k in range(9):
            if (adj.membership(k).toarray() != 0).tolist() != (dist == k).tolist():
                mismatches += 1
    # the per-vertex set recurrence on a sample of vertices
    t1 = time.perf_counter()
    for mesh in meshes[::10]:
        dist = graph_distances(mesh)
        for v in range(0, mesh.n_vertices, 7):
            for k in range(9):
                if ring_neighbors(mesh, v, k) != set(np.flatnonzero(dist[v] == k).tolist()):
                    mismatches += 1
    elapsed += time.perf_counter() - t1
    sizes = [m.n_vertices for m in meshes]
    ok = mismatches == 0 and elapsed < 30.0
    return report(1, "ring recurrence == BFS levels", ok,
                  f"200 meshes ({min(sizes)}-{max(sizes)} vertices), k<=8, "
                  f"{mismatches} mismatches, {elapsed:.1f}s (limit 30s)", capsys)


# -- 2 -------------------------------------------------------------------


def check_expand_dense(capsys=None):
    from meshring.expansion import expand_array
    rng = np.random.default_rng(2)
    meshes = random_meshes(50, 6, 50, seed=2)
    worst, empty_rows, empty_bad = 0.0, 0, 0
    for i, mesh in enumerate(meshes):
        rings = ((0, 1, 2), (0, 2, 4), (0, 4, 8))[i % 3]
        X = rng.normal(size=(mesh.n_vertices, 5))
        dist = graph_distances(mesh)
        A = np.stack([(dist == r).astype(float) for r in rings])
        counts = A.sum(axis=2, keepdims=True)
        dense = np.where(counts > 0, (A @ X) / np.maximum(counts, 1), 0.0)
        C = expand_array(X, ring_adjacency(mesh, rings))
        worst = max(worst, float(np.abs(C - dense).max()))
        empty = counts[..., 0] == 0
        empty_rows += int(empty.sum())
        empty_bad += int(np.count_nonzero(C[empty]))
    ok = worst <= 1e-12 and empty_bad == 0 and empty_rows > 0
    return report(2, "sparse expand == dense reference", ok,
                  f"50 meshes <=50 vertices, max abs err {worst:.2e} (limit 1e-12), "
                  f"{empty_rows} empty-ring rows, {empty_bad} nonzero entries in them", capsys)


# -- 3 -------------------------------------------------------------------


def _op_error(build, inputs, rng, eps=1e-6):
    tensors = [nn.parameter(a) for a in inputs]
    out = build(*tensors)
    probe = rng.normal(size=out.shape)
    nn.Tensor(np.sum(out.data * probe), (out,), lambda g: (g * probe,)).backward()
    worst = 0.0
    for t in tensors:
        num = np.zeros_like(t.data)
        flat, nflat = t.data.reshape(-1), num.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = np.sum(build(*[nn.Tensor(u.data) for u in tensors]).data * probe)
            flat[i] = old - eps
            down = np.sum(build(*[nn.Tensor(u.data) for u in tensors]).data * probe)
            flat[i] = old
            nflat[i] = (up - down) / (2 * eps)
        worst = max(worst, rel_err(t.grad, num))
    return worst


class _ReluPattern:
    """Records every ReLU on/off mask produced while active."""

    def __init__(self):
        self.masks = []
        self._orig = nn.relu

    def __enter__(self):
        def recording(x):
            self.masks.append(x.data > 0)
            return self._orig(x)
        nn.relu = recording
        return self

    def __exit__(self, *exc):
        nn.relu = self._orig


def _central(loss_value, apply, eps_ladder=(1e-5, 1e-6, 1e-7)):
    """Central difference with the largest step that crosses no ReLU kink.

    ``apply(h)`` shifts the parameters by ``h`` along the probed direction.
    """
    for eps in eps_ladder:
        apply(eps)
        with _ReluPattern() as rec_up:
            up = loss_value()
        apply(-2 * eps)
        with _ReluPattern() as rec_down:
            down = loss_value()
        apply(eps)
        same = all(np.array_equal(a, b) for a, b in zip(rec_up.masks, rec_down.masks))
        if same:
            return (up - down) / (2 * eps), False
    return (up - down) / (2 * eps), True


def _network_error(net, X, adj, targets, rng, samples=4):
    """Directional and sampled-entry finite differences for every parameter tensor."""
    def loss_value():
        return float(net.loss(X, adj, targets)[0].data)

    net.zero_grad()
    loss, _ = net.loss(X, adj, targets)
    loss.backward()
    worst, kinked = 0.0, 0
    for p in net.parameters:
        direction = rng.normal(size=p.shape)

        def shift(h, p=p, direction=direction):
            p.data += h * direction
        numeric, crossed = _central(loss_value, shift)
        kinked += crossed
        worst = max(worst, rel_err(float(np.sum(p.grad * direction)), numeric))
        for i in rng.choice(p.data.size, size=min(samples, p.data.size), replace=False):
            def nudge(h, p=p, i=i):
                p.data.reshape(-1)[i] += h
            numeric, crossed = _central(loss_value, nudge)
            kinked += crossed
            a = p.grad.reshape(-1)[i]
            if max(abs(a), abs(numeric)) > 1e-7:
                worst = max(worst, rel_err(a, numeric))
    return worst, kinked


def check_gradients(capsys=None):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    mesh = random_planar_mesh(rng, 30)
    adj = ring_adjacency(mesh, [0, 1, 2, 4, 8])
    sub = adj.select([0, 2, 4])
    targets = rng.integers(0, 2, size=30)
    relu_in = rng.uniform(0.1, 1, size=(30, 4)) * rng.choice([-1, 1], size=(30, 4))
    ops = {
        "expand": (lambda x: nn.expand(x, sub), [rng.normal(size=(30, 4))]),
        "expand_conv": (lambda x, k, b: nn.conv_ring(nn.expand(x, sub), k, b),
                        [rng.normal(size=(30, 4)), rng.normal(size=(3, 1, 4, 6)), rng.normal(size=6)]),
        "conv_only": (nn.conv_ring, [rng.normal(size=(1, 30, 4)), rng.normal(size=(1, 1, 4, 6)),
                                     rng.normal(size=6)]),
        "dense": (nn.dense, [rng.normal(size=(30, 4)), rng.normal(size=(4, 6)), rng.normal(size=6)]),
        "relu": (nn.relu, [relu_in]),
        "reshape": (lambda x: nn.reshape(x, (1, 30, 4)), [rng.normal(size=(30, 4))]),
        "pair_logit": (nn.pair_logit, [rng.normal(size=(30, 2))]),
        "loss": (lambda z: nn.weighted_ce_loss(z, targets, 3.0), [rng.normal(size=30) * 2]),
    }
    per_op = {name: _op_error(fn, args, rng) for name, (fn, args) in ops.items()}
    net = instantiate(preset("d"), seed=3)
    X = rng.normal(size=(30, 5))
    end_to_end, kinked = _network_error(net, X, adj, targets, rng)
    elapsed = time.perf_counter() - t0
    ok = max(per_op.values()) < 1e-4 and end_to_end < 1e-3 and elapsed < 120
    worst_op = max(per_op, key=per_op.get)
    return report(3, "finite-difference gradients", ok,
                  f"worst per-op {per_op[worst_op]:.1e} ({worst_op}, limit 1e-4), "
                  f"network D end-to-end {end_to_end:.1e} (limit 1e-3, {kinked} probes still "
                  f"straddling a ReLU kink at eps 1e-7), {elapsed:.1f}s (limit 120s)",
                  capsys)


# -- 4 -------------------------------------------------------------------


def check_invariance(capsys=None):
    rng = np.random.default_rng(4)
    # (a) permutation: integer features make every ring sum exact
    exact = True
    for n in (40, 120, 300):
        mesh = random_planar_mesh(rng, n)
        perm = rng.permutation(n)
        moved = Mesh(mesh.vertices[perm], np.argsort(perm)[mesh.faces])
        layer = nn.ConvRingLayer.init(rng, 3, 5, 16)
        X = rng.integers(-8, 9, size=(n, 5)).astype(float)
        for rings in ((0, 1, 2), (0, 2, 4), (0, 4, 8)):
            a = layer(nn.expand(nn.Tensor(X), ring_adjacency(mesh, rings))).data[0]
            b = layer(nn.expand(nn.Tensor(X[perm]), ring_adjacency(moved, rings))).data[0]
            exact &= np.array_equal(b, a[perm])

    # (b) rigid motion; error per feature column, relative to the column norm
    rigid = 0.0
    for seed, family in ((0, "bumpy_sphere"), (1, "ridged_heightfield"), (2, "bumpy_sphere")):
        mesh, _ = generate(SynthConfig(seed=seed, family=family))
        R = Rotation.random(random_state=seed).as_matrix()
        moved = Mesh(mesh.vertices @ R.T + rng.uniform(-20, 20, size=3), mesh.faces)
        fa = np.column_stack([curvatures(mesh).as_array(), mean_neighbor_distances(mesh)])
        fb = np.column_stack([curvatures(moved).as_array(), mean_neighbor_distances(moved)])
        rigid = max(rigid, float(np.max(np.linalg.norm(fa - fb, axis=0) / np.linalg.norm(fa, axis=0))))

    # (c) scale laws on the unit icosphere
    sphere = Mesh(*icosphere(3))
    base = curvatures(sphere)
    d0 = mean_neighbor_distances(sphere)
    scale_err = 0.0
    for s in (0.5, 2.5, 10.0):
        big = Mesh(sphere.vertices * s, sphere.faces)
        c = curvatures(big)
        pairs = [(mean_neighbor_distances(big), s * d0), (c.k_mean, base.k_mean / s),
                 (c.k_max, base.k_max / s), (c.k_min, base.k_min / s),
                 (c.k_gauss, base.k_gauss / s ** 2)]
        for got, want in pairs:
            scale_err = max(scale_err, float(np.max(np.abs(got - want) / np.abs(want))))

    ok = exact and rigid < 1e-6 and scale_err < 0.01
    return report(4, "equivariance / invariance", ok,
                  f"(a) permutation exact={exact}; (b) rigid motion rel err {rigid:.1e} (limit 1e-6); "
                  f"(c) scale-law rel err {scale_err:.1e} (limit 1e-2)", capsys)


# -- 5 -------------------------------------------------------------------


def check_curvature_oracles(capsys=None):
    sphere = Mesh(*icosphere(3))
    c = curvatures(sphere)
    mean_err = float(np.median(np.abs(c.k_mean - 1)))
    gauss_err = float(np.median(np.abs(c.k_gauss - 1)))
    v, f = grid_mesh(15, 12, 0.4)
    grid = Mesh(v, f)
    interior = ~grid.boundary_vertices()
    flat = max(float(np.abs(a[interior]).max()) for a in curvatures(grid))
    ok = mean_err < 0.05 and gauss_err < 0.05 and flat < 1e-6
    return report(5, "curvature oracles", ok,
                  f"icosphere median |k_mean-1|={mean_err:.1e}, |k_gauss-1|={gauss_err:.1e} "
                  f"(limit 5e-2); flat interior max |k|={flat:.1e} (limit 1e-6)", capsys)


# -- 6 -------------------------------------------------------------------


def check_learning(capsys=None):
    t0 = time.perf_counter()
    sets = generate_dataset(SynthConfig(seed=0), (40, 10, 10))
    ratio = float(np.mean([s.labels.mean() for s in sets["train"]]))
    max_n = max(s.n_vertices for ds in sets.values() for s in ds)
    sched = nn.SgdSchedule(total_steps=2000)
    results = {}
    for name, kind in (("expand-conv", "expand_conv"), ("baseline", "conv_only")):
        spec = custom([16, 32, 16, 2], rings=(0, 1, 2), kind=kind, name=name)
        net, _ = train(sets["train"], spec, sched, seed=0, val_set=sets["val"], eval_every=500)
        results[name] = evaluate(net, sets["test"])
    elapsed = time.perf_counter() - t0
    ours, base = results["expand-conv"], results["baseline"]
    ok = (ours.accuracy >= 0.95 and ours.recall >= 0.85 and base.accuracy < ours.accuracy
          and elapsed < 1800 and max_n <= 2000)
    return report(6, "desk-scale learning", ok,
                  f"expand-conv test acc {ours.accuracy:.3f} (>=0.95) recall {ours.recall:.3f} (>=0.85); "
                  f"baseline acc {base.accuracy:.3f} (must be lower); positive ratio {ratio:.2f}, "
                  f"<= {max_n} vertices, {elapsed:.0f}s (limit 1800s)", capsys)


# -- 7 -------------------------------------------------------------------


def check_schedule_loss(capsys=None):
    sched = nn.SgdSchedule()
    rates = [sched.lr(s) for s in (0, 5000, 10000)]
    cli_sched = nn.SgdSchedule(TRAIN_DEFAULTS["initial_lr"],
                               tuple(tuple(d) for d in TRAIN_DEFAULTS["lr_drops"]),
                               TRAIN_DEFAULTS["steps"], TRAIN_DEFAULTS["pos_weight"])
    z = nn.Tensor(np.zeros(1))
    pos = float(nn.weighted_ce_loss(z, [1], 3.0).data)
    neg = float(nn.weighted_ce_loss(z, [0], 3.0).data)
    ok = (rates == [0.01, 0.003, 0.001] and cli_sched == sched
          and abs(pos - 3 * math.log(2)) < 1e-12 and abs(neg - math.log(2)) < 1e-12)
    return report(7, "schedule and loss fidelity", ok,
                  f"lr at 0/5000/10000 = {rates}; loss(z=0) pos {pos:.15f} (3ln2), "
                  f"neg {neg:.15f} (ln2); CLI defaults match={cli_sched == sched}", capsys)


# -- 8 -------------------------------------------------------------------


def check_metrics(capsys=None):
    rng = np.random.default_rng(8)
    bad = 0
    zero_cases = 0
    for _ in range(10_000):
        counts = rng.integers(0, 1000, size=4) * (rng.random(4) > 0.3)
        tp, tn, fp, fn = (int(c) for c in counts)
        r = MetricsReport(tp, tn, fp, fn)
        total = tp + tn + fp + fn
        expect = (float(Fraction(tp + tn, total)) if total else 0.0,
                  float(Fraction(tp, tp + fp)) if tp + fp else 0.0,
                  float(Fraction(tp, tp + fn)) if tp + fn else 0.0)
        zero_cases += (tp + fp == 0) or (tp + fn == 0)
        bad += (r.accuracy, r.precision, r.recall) != expect
    ok = bad == 0 and zero_cases > 0
    return report(8, "metrics identities", ok,
                  f"10000 random confusion counts, {bad} mismatches, "
                  f"{zero_cases} with a zero denominator", capsys)


# -- 9 -------------------------------------------------------------------


def check_round_trip(tmp_dir, capsys=None):
    rng = np.random.default_rng(9)
    mesh, _ = generate(SynthConfig(seed=9, vertex_budget=400))
    failures = 0
    for i in range(100):
        labels = (rng.random(mesh.n_vertices) < rng.random()).astype(np.int64)
        path = Path(tmp_dir) / f"rt_{i}.obj"
        export_colored_mesh(mesh, path, labels=labels)
        failures += not np.array_equal(labels_from_colors(parse_obj(path)), labels)
    ok = failures == 0
    return report(9, "export -> parse -> labels round trip", ok,
                  f"100 random label vectors, {failures} failures", capsys)


# -- pytest entry points ---------------------------------------------------


def test_criterion_1_ring_recurrence(capsys):
    assert check_ring_recurrence(capsys)


def test_criterion_2_expand_dense(capsys):
    assert check_expand_dense(capsys)


def test_criterion_3_gradients(capsys):
    assert check_gradients(capsys)


def test_criterion_4_invariance(capsys):
    assert check_invariance(capsys)


def test_criterion_5_curvature(capsys):
    assert check_curvature_oracles(capsys)


@pytest.mark.slow
def test_criterion_6_learning(capsys):
    assert check_learning(capsys)


def test_criterion_7_schedule_loss(capsys):
    assert check_schedule_loss(capsys)


def test_criterion_8_metrics(capsys):
    assert check_metrics(capsys)


def test_criterion_9_round_trip(tmp_path, capsys):
    assert check_round_trip(tmp_path, capsys)


if __name__ == "__main__":
    import tempfile
    with tempfile.TemporaryDirectory() as tmp:
        results = [check_ring_recurrence(), check_expand_dense(), check_gradients(), check_invariance(),
                   check_curvature_oracles(), check_learning(), check_schedule_loss(), check_metrics(),
                   check_round_trip(tmp)]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)

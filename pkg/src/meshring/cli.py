"""Command line interface: ``meshring <subcommand> ...``.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from .architectures import Network, NetworkSpec, preset
from .dataset import load_split
from .exceptions import ConfigError, MeshRingError, NumericalError
from .features import FeatureSelection, assemble_features
from .mesh import labels_from_colors, ring_adjacency
from .nn import SgdSchedule
from .objio import parse_obj
from .synth import SynthConfig, generate_dataset
from .training import (append_metrics, evaluate, export_colored_mesh, predict,
                       schedule_to_dict, train)

logger = logging.getLogger("meshring")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
INSPECT_RINGS = (1, 2, 4, 8)

# defaults for `train`; a --config file overrides these and flags override both
TRAIN_DEFAULTS = {
    "data": None,
    "arch": "d",
    "arch_file": None,
    "features": "curv+dist",
    "seed": 0,
    "steps": 11500,
    "eval_every": 500,
    "initial_lr": 0.01,
    "lr_drops": [[5000, 0.003], [10000, 0.001]],
    "pos_weight": 3.0,
    "loss_form": "standard",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


# -- subcommands ------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = _load_json(args.config) if args.config else {}
    counts = cfg.pop("counts", {"train": 40, "val": 10, "test": 10})
    if args.counts:
        counts = dict(zip(("train", "val", "test"), (int(c) for c in args.counts.split(","))))
    if args.seed is not None:
        cfg["seed"] = args.seed
    config = SynthConfig.from_dict(cfg)
    splits = generate_dataset(config, counts, args.out)
    for name, ds in splits.items():
        print(f"{name}: {len(ds)} meshes, positive fraction {ds.positive_fraction:.3f}")
    print(f"wrote {Path(args.out) / 'manifest.json'}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    mesh = parse_obj(args.mesh)
    print(f"vertices: {mesh.n_vertices}")
    print(f"faces: {mesh.n_faces}")
    print(f"edges: {mesh.n_edges}")
    print(f"boundary vertices: {int(mesh.boundary_vertices().sum())}")
    if mesh.colors is not None:
        labels = labels_from_colors(mesh)
        pos = int(labels.sum())
        print(f"positive: {pos} / {mesh.n_vertices} ({pos / max(mesh.n_vertices, 1):.3f})")
    else:
        print("positive: n/a (no vertex colors)")
    adj = ring_adjacency(mesh, INSPECT_RINGS)
    print("ring sizes:")
    for k in INSPECT_RINGS:
        sizes = adj.ring_sizes(k)
        hist = dict(sorted(Counter(sizes.tolist()).items()))
        print(f"  k={k}: min {sizes.min()} mean {sizes.mean():.2f} max {sizes.max()} histogram {hist}")
    return EXIT_OK


def cmd_features(args) -> int:
    mesh = parse_obj(args.mesh)
    sel = FeatureSelection.parse(args.select)
    fm = assemble_features(mesh, sel, standardize=not args.raw)
    labels = labels_from_colors(mesh) if mesh.colors is not None else None
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(list(fm.feature_names) + ["label"])
        for i, row in enumerate(fm.data.tolist()):
            w.writerow([repr(v) for v in row] + ["" if labels is None else int(labels[i])])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def _train_config(args) -> dict:
    cfg = dict(TRAIN_DEFAULTS)
    if args.config:
        file_cfg = _load_json(args.config)
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown train config key(s): {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in TRAIN_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if cfg["data"] is None:
        raise ConfigError("--data is required (flag or config file)")
    return cfg


def cmd_train(args) -> int:
    cfg = _train_config(args)
    sel = FeatureSelection.parse(cfg["features"])
    if cfg["arch_file"]:
        spec = NetworkSpec.from_json(cfg["arch_file"]).with_input_features(sel.n_features)
    else:
        spec = preset(cfg["arch"], sel.n_features)
    schedule = SgdSchedule(cfg["initial_lr"], tuple(tuple(d) for d in cfg["lr_drops"]),
                           int(cfg["steps"]), float(cfg["pos_weight"]), cfg["loss_form"])
    train_set = load_split(cfg["data"], "train")
    try:
        val_set = load_split(cfg["data"], "val")
    except MeshRingError:
        val_set = None
    snapshot = dict(cfg, data=str(Path(cfg["data"]).resolve()), spec=spec.to_dict(),
                    schedule=schedule_to_dict(schedule))
    _, history = train(train_set, spec, schedule, int(cfg["seed"]), val_set=val_set, sel=sel,
                       eval_every=int(cfg["eval_every"]), run_dir=args.out, config=snapshot)
    for report in history:
        print(f"step {report.step:6d} {report.split}: {report.summary()} loss={report.loss:.4f}")
    print(f"run directory: {args.out}")
    return EXIT_OK


def _run_checkpoint(run: Path, which: str) -> Network:
    path = run / f"{which}.json" if which in ("best", "final") else Path(which)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return Network.load(path)


def _run_selection(run: Path, config: dict | None = None) -> FeatureSelection | None:
    """Feature selection the run was trained with (None when unknown)."""
    if config is None:
        if not (run / "config.json").exists():
            return None
        config = _load_json(run / "config.json")
    return FeatureSelection.parse(config["features"]) if "features" in config else None


def cmd_eval(args) -> int:
    run = Path(args.run)
    config = _load_json(run / "config.json")
    net = _run_checkpoint(run, args.checkpoint)
    data = args.data or config["data"]
    dataset = load_split(data, args.split)
    report = evaluate(net, dataset, _run_selection(run, config), pos_weight=float(config.get("pos_weight", 3.0)),
                      step=-1, loss_form=config.get("loss_form", "standard"))
    print(f"{args.split}: {report.summary()} loss={report.loss:.4f}")
    print(f"tp={report.tp} tn={report.tn} fp={report.fp} fn={report.fn}")
    append_metrics(run / "metrics.csv", report)
    return EXIT_OK


def cmd_predict(args) -> int:
    run = Path(args.run)
    net = _run_checkpoint(run, args.checkpoint)
    mesh = parse_obj(args.mesh)
    labels, prob = predict(net, mesh, _run_selection(run))
    if args.probability:
        export_colored_mesh(mesh, args.out, probabilities=prob)
    else:
        export_colored_mesh(mesh, args.out, labels=labels)
    print(f"positive: {int(labels.sum())} / {mesh.n_vertices} ({labels.mean():.3f})")
    if mesh.colors is not None:
        truth = labels_from_colors(mesh)
        print(f"agreement with input colors: {np.mean(truth == labels):.3f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="meshring", description="Ring-expansion mesh CNN for vertex segmentation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a synthetic labelled dataset")
    g.add_argument("--config", help="JSON generator config (plus optional 'counts')")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--counts", help="train,val,test mesh counts, e.g. 40,10,10")
    g.set_defaults(func=cmd_gen_data)

    i = sub.add_parser("inspect", help="mesh statistics and ring-size histograms")
    i.add_argument("mesh")
    i.set_defaults(func=cmd_inspect)

    f = sub.add_parser("features", help="export per-vertex features as CSV")
    f.add_argument("mesh")
    f.add_argument("--select", default="curv+dist", help="xyz, curv+dist or all")
    f.add_argument("--raw", action="store_true", help="skip standardisation")
    f.add_argument("--out", help="CSV path (default stdout)")
    f.set_defaults(func=cmd_features)

    t = sub.add_parser("train", help="train a network on a dataset directory")
    t.add_argument("--config", help="JSON training config; flags override it")
    t.add_argument("--data")
    arch = t.add_mutually_exclusive_group()
    arch.add_argument("--arch", type=str.lower, choices=["baseline", "a", "b", "c", "d", "e"])
    arch.add_argument("--arch-file", dest="arch_file")
    t.add_argument("--features")
    t.add_argument("--seed", type=int)
    t.add_argument("--steps", type=int)
    t.add_argument("--eval-every", dest="eval_every", type=int)
    t.add_argument("--initial-lr", dest="initial_lr", type=float)
    t.add_argument("--pos-weight", dest="pos_weight", type=float)
    t.add_argument("--loss-form", dest="loss_form", choices=["standard", "literal"])
    t.add_argument("--out", required=True, help="run directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a run's checkpoint on a split")
    e.add_argument("--run", required=True)
    e.add_argument("--split", default="test")
    e.add_argument("--data", help="dataset directory (default: the one used for training)")
    e.add_argument("--checkpoint", default="best", help="best, final or a checkpoint path")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("predict", help="label a mesh and write a coloured OBJ")
    r.add_argument("--run", required=True)
    r.add_argument("mesh")
    r.add_argument("--out", required=True)
    r.add_argument("--checkpoint", default="best")
    r.add_argument("--probability", action="store_true", help="colour by probability")
    r.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MeshRingError, OSError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

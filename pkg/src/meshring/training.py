"""Training loop, evaluation metrics, prediction and coloured-mesh export.

Run directory layout written by :func:`train`::

    RUN/config.json           configuration snapshot
    RUN/metrics.csv           step, split, accuracy, precision, recall, loss, tp, tn, fp, fn
    RUN/checkpoints/step_XXXXXX.json
    RUN/best.json             checkpoint with the best validation accuracy
    RUN/final.json            checkpoint after the last step
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .architectures import Network, NetworkSpec, instantiate, required_rings
from .dataset import Dataset, MeshSample
from .exceptions import ConfigError, NumericalError, ShapeMismatchError
from .features import FeatureSelection, assemble_features
from .mesh import Mesh, ring_adjacency
from .nn import SgdSchedule, sgd_step, sigmoid
from .objio import write_obj

logger = logging.getLogger(__name__)

RED = (1.0, 0.0, 0.0)
GRAY = (0.7, 0.7, 0.7)
METRICS_FIELDS = ("step", "split", "accuracy", "precision", "recall", "loss", "tp", "tn", "fp", "fn")


@dataclass(frozen=True)
class MetricsReport:
    """Pooled per-vertex confusion counts and the ratios derived from them.

    Precision and recall are defined as 0 when their denominator is 0.
    """

    tp: int
    tn: int
    fp: int
    fn: int
    step: int = 0
    split: str = "val"
    loss: float = float("nan")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @classmethod
    def from_predictions(cls, y_true, y_pred, **kw) -> "MetricsReport":
        return cls(*confusion_counts(y_true, y_pred), **kw)

    def __add__(self, other: "MetricsReport") -> "MetricsReport":
        return MetricsReport(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp,
                             self.fn + other.fn, self.step, self.split, self.loss)

    def row(self) -> dict:
        return {"step": self.step, "split": self.split, "accuracy": self.accuracy,
                "precision": self.precision, "recall": self.recall, "loss": self.loss,
                "tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}

    def summary(self) -> str:
        return f"accuracy={self.accuracy:.3f} precision={self.precision:.3f} recall={self.recall:.3f}"


def confusion_counts(y_true, y_pred) -> tuple[int, int, int, int]:
    """``(tp, tn, fp, fn)`` for binary label vectors."""
    t = np.asarray(y_true).astype(bool)
    p = np.asarray(y_pred).astype(bool)
    if t.shape != p.shape:
        raise ShapeMismatchError(f"label shapes differ: {t.shape} vs {p.shape}")
    return (int(np.sum(t & p)), int(np.sum(~t & ~p)), int(np.sum(~t & p)), int(np.sum(t & ~p)))


def selection_for(net: Network) -> FeatureSelection:
    if net.feature_names:
        names = set(net.feature_names)
        return FeatureSelection("x" in names, "k_mean" in names, "d" in names)
    return {3: FeatureSelection(True, False, False), 5: FeatureSelection(),
            8: FeatureSelection(True, True, True)}[net.spec.input_features]


def _check_selection(net: Network, sel: FeatureSelection):
    if sel.n_features != net.spec.input_features:
        raise ShapeMismatchError(
            f"network was built for {net.spec.input_features} features, got {sel.n_features} ({sel})"
        )
    if net.feature_names and tuple(net.feature_names) != sel.names:
        raise ShapeMismatchError(f"network features {net.feature_names} != {sel.names}")


def _sample_inputs(sample: MeshSample, sel: FeatureSelection, rings):
    X = sample.features(sel).data
    adj = sample.adjacency(rings) if rings else None
    return X, adj


def evaluate(net: Network, dataset: Dataset, sel: FeatureSelection | None = None,
             pos_weight: float = 3.0, step: int = 0, loss_form: str = "standard") -> MetricsReport:
    """Pool confusion counts over every vertex of every mesh (argmax decision)."""
    sel = selection_for(net) if sel is None else sel
    _check_selection(net, sel)
    rings = required_rings(net.spec)
    counts = np.zeros(4, dtype=np.int64)
    losses, weights = [], []
    for sample in dataset:
        X, adj = _sample_inputs(sample, sel, rings)
        loss, logits = net.loss(X, adj, sample.labels, pos_weight, loss_form)
        pred = logits.data[:, 1] > logits.data[:, 0]
        counts += confusion_counts(sample.labels, pred)
        losses.append(float(loss.data))
        weights.append(sample.n_vertices)
    mean_loss = float(np.average(losses, weights=weights)) if losses else float("nan")
    return MetricsReport(*(int(c) for c in counts), step=step, split=dataset.split, loss=mean_loss)


def predict(net: Network, mesh: Mesh, sel: FeatureSelection | str | None = None):
    """Return ``(labels, probabilities)`` where probability is the positive softmax channel."""
    if isinstance(sel, str):
        sel = FeatureSelection.parse(sel)
    sel = selection_for(net) if sel is None else sel
    _check_selection(net, sel)
    X = assemble_features(mesh, sel).data
    rings = required_rings(net.spec)
    adj = ring_adjacency(mesh, sorted(rings | {0})) if rings else None
    logits = net.forward(X, adj).data
    prob = sigmoid(logits[:, 1] - logits[:, 0])
    return (logits[:, 1] > logits[:, 0]).astype(np.int64), prob


def label_colors(labels) -> np.ndarray:
    labels = np.asarray(labels).astype(bool)
    return np.where(labels[:, None], np.array(RED), np.array(GRAY))


def probability_colors(prob) -> np.ndarray:
    """Linear blend from gray (p=0) to red (p=1)."""
    p = np.clip(np.asarray(prob, dtype=np.float64), 0.0, 1.0)[:, None]
    return (1.0 - p) * np.array(GRAY) + p * np.array(RED)


def export_colored_mesh(mesh: Mesh, path, labels=None, probabilities=None) -> None:
    """Write ``mesh`` as OBJ with red positives / gray negatives (or a probability blend)."""
    if (labels is None) == (probabilities is None):
        raise ValueError("pass exactly one of labels or probabilities")
    colors = label_colors(labels) if labels is not None else probability_colors(probabilities)
    if len(colors) != mesh.n_vertices:
        raise ShapeMismatchError("one label/probability per vertex is required")
    write_obj(mesh, path, colors)


class RunWriter:
    """Appends metrics rows and checkpoints to a run directory."""

    def __init__(self, run_dir, config: dict | None = None):
        self.run_dir = Path(run_dir)
        (self.run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        if config is not None:
            with open(self.run_dir / "config.json", "w") as fh:
                json.dump(config, fh, indent=2)
        self.metrics_path = self.run_dir / "metrics.csv"

    def log(self, report: MetricsReport) -> None:
        append_metrics(self.metrics_path, report)

    def checkpoint(self, net: Network, step: int, name: str | None = None, **extra) -> Path:
        path = self.run_dir / (name or f"checkpoints/step_{step:06d}.json")
        net.save(path, step=step, **extra)
        return path


def append_metrics(path, report: MetricsReport) -> None:
    new = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRICS_FIELDS)
        if new:
            w.writeheader()
        w.writerow(report.row())


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def train(train_set: Dataset, spec: NetworkSpec, schedule: SgdSchedule = SgdSchedule(),
          seed: int = 0, *, val_set: Dataset | None = None,
          sel: FeatureSelection | str = "curv+dist", eval_every: int = 500,
          run_dir=None, config: dict | None = None,
          callback: Callable[[MetricsReport], None] | None = None):
    """Train ``spec`` by per-mesh gradient descent.

    One mesh per step, visiting the training meshes in a freshly shuffled
    order each epoch.  Every ``eval_every`` steps the network is evaluated
    on ``val_set`` (or the training set when no validation set is given).

    Returns ``(network, history)``; ``history`` holds one validation
    :class:`MetricsReport` per evaluation.  With ``run_dir`` the best
    network by validation accuracy is also kept as ``best.json``.
    """
    if len(train_set) == 0:
        raise ConfigError("training split is empty")
    if eval_every <= 0:
        raise ConfigError("eval_every must be positive")
    sel = FeatureSelection.parse(sel) if isinstance(sel, str) else sel
    if sel.n_features != spec.input_features:
        raise ShapeMismatchError(
            f"spec expects {spec.input_features} features but selection {sel} gives {sel.n_features}"
        )
    for s in train_set:
        if s.labels is None:
            raise ConfigError(f"training mesh {s.name} has no labels")
    rings = required_rings(spec)
    val = val_set if val_set is not None and len(val_set) else train_set
    train_set.prepare(sel, rings)
    if val is not train_set:
        val.prepare(sel, rings)

    rng = np.random.default_rng(seed)
    net = instantiate(spec, seed, sel.names)
    writer = RunWriter(run_dir, config) if run_dir is not None else None
    history: list[MetricsReport] = []
    best_acc = -1.0

    order: list[int] = []
    window_loss = 0.0
    window_counts = np.zeros(4, dtype=np.int64)
    window_steps = 0
    for step in range(schedule.total_steps):
        if not order:
            order = rng.permutation(len(train_set)).tolist()
        sample = train_set[order.pop(0)]
        X, adj = _sample_inputs(sample, sel, rings)
        loss, logits = net.loss(X, adj, sample.labels, schedule.pos_weight, schedule.loss_form)
        value = float(loss.data)
        if not math.isfinite(value):
            raise NumericalError(f"non-finite loss at step {step} on mesh {sample.name}")
        net.zero_grad()
        loss.backward()
        try:
            sgd_step(net.parameters, None, schedule, step)
        except NumericalError as exc:
            raise NumericalError(f"{exc} (mesh {sample.name})") from None
        window_loss += value
        window_steps += 1
        window_counts += confusion_counts(sample.labels, logits.data[:, 1] > logits.data[:, 0])

        done = step + 1
        if done % eval_every == 0:
            train_report = MetricsReport(*(int(c) for c in window_counts), step=done,
                                         split="train", loss=window_loss / window_steps)
            report = evaluate(net, val, sel, schedule.pos_weight, done, schedule.loss_form)
            report = MetricsReport(report.tp, report.tn, report.fp, report.fn, done,
                                   val.split if val is not train_set else "train-eval", report.loss)
            history.append(report)
            logger.info("step %d  train loss %.4f  %s %s", done, train_report.loss,
                        report.split, report.summary())
            if writer is not None:
                writer.log(train_report)
                writer.log(report)
                writer.checkpoint(net, done, accuracy=report.accuracy)
                if report.accuracy > best_acc:
                    writer.checkpoint(net, done, "best.json", accuracy=report.accuracy)
            best_acc = max(best_acc, report.accuracy)
            if callback is not None:
                callback(report)
            window_loss, window_steps = 0.0, 0
            window_counts[:] = 0
    if writer is not None:
        writer.checkpoint(net, schedule.total_steps, "final.json")
        if best_acc < 0:
            writer.checkpoint(net, schedule.total_steps, "best.json")
    return net, history


def schedule_to_dict(schedule: SgdSchedule) -> dict:
    d = asdict(schedule)
    d["drops"] = [list(x) for x in schedule.drops]
    return d

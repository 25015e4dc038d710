"""scikit-learn compatible wrappers.

``X`` is a sequence of meshes (``Mesh`` objects or OBJ paths) and ``y`` a
matching sequence of per-vertex 0/1 label vectors.  Outputs are lists with
one array per mesh, since meshes differ in vertex count.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .architectures import NetworkSpec, preset, required_rings
from .dataset import Dataset
from .features import FeatureSelection, assemble_features
from .mesh import ring_adjacency
from .nn import SgdSchedule, softmax_rows
from .training import MetricsReport, confusion_counts, train
from .validation import check_label_list, check_mesh_list


def _resolve_spec(arch, m: int) -> NetworkSpec:
    if isinstance(arch, NetworkSpec):
        return arch.with_input_features(m)
    if isinstance(arch, dict):
        return NetworkSpec.from_dict(arch).with_input_features(m)
    return preset(arch, m)


class MeshFeatureExtractor(TransformerMixin, BaseEstimator):
    """Per-vertex feature matrices (coordinates, curvatures, neighbour distance)."""

    def __init__(self, features="curv+dist", standardize=True):
        self.features = features
        self.standardize = standardize

    def fit(self, X, y=None):
        check_mesh_list(X)
        self.selection_ = FeatureSelection.parse(self.features)
        self.n_features_out_ = self.selection_.n_features
        return self

    def transform(self, X):
        check_is_fitted(self, "selection_")
        return [assemble_features(m, self.selection_, self.standardize).data
                for m in check_mesh_list(X)]

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "selection_")
        return np.array(self.selection_.names, dtype=object)


class MeshSegmenter(ClassifierMixin, BaseEstimator):
    """Per-vertex binary classifier built from ring-expansion convolutions.

    Parameters mirror the training setup: ``arch`` is a preset name
    (``baseline``, ``a`` ... ``e``), a :class:`NetworkSpec` or its dict form.
    """

    def __init__(self, arch="d", features="curv+dist", initial_lr=0.01,
                 lr_drops=((5000, 0.003), (10000, 0.001)), max_steps=11500,
                 pos_weight=3.0, loss_form="standard", eval_every=500, random_state=0):
        self.arch = arch
        self.features = features
        self.initial_lr = initial_lr
        self.lr_drops = lr_drops
        self.max_steps = max_steps
        self.pos_weight = pos_weight
        self.loss_form = loss_form
        self.eval_every = eval_every
        self.random_state = random_state

    def _schedule(self) -> SgdSchedule:
        return SgdSchedule(self.initial_lr, tuple(tuple(d) for d in self.lr_drops),
                           self.max_steps, self.pos_weight, self.loss_form)

    def fit(self, X, y=None, X_val=None, y_val=None):
        meshes = check_mesh_list(X)
        labels = check_label_list(y, meshes)
        sel = FeatureSelection.parse(self.features)
        spec = _resolve_spec(self.arch, sel.n_features)
        val = None
        if X_val is not None:
            val_meshes = check_mesh_list(X_val)
            val = Dataset.from_meshes("val", val_meshes, check_label_list(y_val, val_meshes))
        self.network_, self.history_ = train(
            Dataset.from_meshes("train", meshes, labels), spec, self._schedule(),
            int(self.random_state or 0), val_set=val, sel=sel,
            eval_every=min(self.eval_every, max(self.max_steps, 1)),
        )
        self.selection_ = sel
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = sel.n_features
        return self

    def _logits(self, X):
        check_is_fitted(self, "network_")
        rings = required_rings(self.network_.spec)
        out = []
        for mesh in check_mesh_list(X):
            feats = assemble_features(mesh, self.selection_).data
            adj = ring_adjacency(mesh, sorted(rings | {0})) if rings else None
            out.append(self.network_.forward(feats, adj).data)
        return out

    def decision_function(self, X):
        """Positive-class logit per vertex, one array per mesh."""
        return [z[:, 1] - z[:, 0] for z in self._logits(X)]

    def predict_proba(self, X):
        return [softmax_rows(z) for z in self._logits(X)]

    def predict(self, X):
        return [(z[:, 1] > z[:, 0]).astype(np.int64) for z in self._logits(X)]

    def report(self, X, y=None) -> MetricsReport:
        meshes = check_mesh_list(X)
        labels = check_label_list(y, meshes)
        counts = np.zeros(4, dtype=np.int64)
        for t, p in zip(labels, self.predict(meshes)):
            counts += confusion_counts(t, p)
        return MetricsReport(*(int(c) for c in counts), split="score")

    def score(self, X, y=None, sample_weight=None):
        """Vertex accuracy pooled over all meshes."""
        return self.report(X, y).accuracy

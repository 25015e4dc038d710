"""Network specifications, the six preset networks, and instantiated networks.

Every preset follows the same channel ladder::

    16 x2, 32 x3, 64 x3, 32 x3, 16 x2, 4 x2, 2 x1     (16 conv layers)

* ``Baseline``: plain per-vertex convolutions, no ring expansion.
* ``A`` / ``B`` / ``C``: every layer expands rings (0,1,2) / (0,2,4) / (0,4,8).
* ``D``: blocks use (0,1,2), (0,2,4), (0,4,8), (0,2,4), (0,1,2), (0,1,2), (0,1,2).
* ``E``: D's first five blocks, then per-vertex dense layers 128, 512, 128, 2.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import nn
from .exceptions import ConfigError, ShapeMismatchError
from .mesh import RingAdjacency

KINDS = ("expand_conv", "conv_only", "dense")
PRESET_NAMES = ("Baseline", "A", "B", "C", "D", "E")
PRESET_RINGS = ((0, 1, 2), (0, 2, 4), (0, 4, 8))
LADDER = ((16, 2), (32, 3), (64, 3), (32, 3), (16, 2), (4, 2), (2, 1))
D_RINGS = ((0, 1, 2), (0, 2, 4), (0, 4, 8), (0, 2, 4), (0, 1, 2), (0, 1, 2), (0, 1, 2))

CHECKPOINT_FORMAT = "meshring-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: int
    rings: tuple[int, ...] = ()
    repeat: int = 1

    def __post_init__(self):
        object.__setattr__(self, "rings", tuple(int(r) for r in self.rings))
        if self.kind not in KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}; choose from {KINDS}")
        if int(self.out_channels) <= 0:
            raise ConfigError("out_channels must be positive")
        if int(self.repeat) <= 0:
            raise ConfigError("repeat must be positive")
        if self.kind == "expand_conv":
            if len(self.rings) != 3:
                raise ConfigError(f"expand_conv needs exactly 3 rings, got {self.rings}")
            if min(self.rings) < 0:
                raise ConfigError("ring numbers must be >= 0")
        elif self.rings:
            raise ConfigError(f"{self.kind} layers take no rings")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "out_channels": int(self.out_channels), "repeat": int(self.repeat)}
        if self.rings:
            d["rings"] = list(self.rings)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        try:
            return cls(kind=d["kind"], out_channels=int(d["out_channels"]),
                       rings=tuple(d.get("rings", ())), repeat=int(d.get("repeat", 1)))
        except KeyError as exc:
            raise ConfigError(f"layer spec missing field {exc}") from None


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    input_features: int = 5

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ConfigError("network needs at least one layer")
        if self.input_features <= 0:
            raise ConfigError("input_features must be positive")
        if self.layers[-1].out_channels != 2:
            raise ConfigError("final layer must emit 2 channels")
        if self.name in PRESET_NAMES:
            for layer in self.layers:
                if layer.kind == "expand_conv" and layer.rings not in PRESET_RINGS:
                    raise ConfigError(f"preset {self.name} cannot use rings {layer.rings}")

    def flat_layers(self) -> list[LayerSpec]:
        """One entry per concrete layer (repeats unrolled)."""
        out = []
        for layer in self.layers:
            single = LayerSpec(layer.kind, layer.out_channels, layer.rings, 1)
            out.extend([single] * layer.repeat)
        return out

    def with_input_features(self, m: int) -> "NetworkSpec":
        return NetworkSpec(self.name, self.layers, m)

    def to_dict(self) -> dict:
        return {"name": self.name, "input_features": self.input_features,
                "layers": [layer.to_dict() for layer in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        try:
            layers = tuple(LayerSpec.from_dict(x) for x in d["layers"])
        except (KeyError, TypeError):
            raise ConfigError("network spec needs a 'layers' list") from None
        return cls(d.get("name", "Custom"), layers, int(d.get("input_features", 5)))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_json(cls, path) -> "NetworkSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def preset(name: str, input_features: int = 5) -> NetworkSpec:
    """One of the six preset architectures (name is case-insensitive)."""
    key = {n.lower(): n for n in PRESET_NAMES}.get(str(name).lower())
    if key is None:
        raise ConfigError(f"unknown architecture {name!r}; choose from {PRESET_NAMES}")
    if key == "Baseline":
        layers = [LayerSpec("conv_only", c, (), r) for c, r in LADDER]
    elif key in ("A", "B", "C"):
        rings = PRESET_RINGS["ABC".index(key)]
        layers = [LayerSpec("expand_conv", c, rings, r) for c, r in LADDER]
    else:
        layers = [LayerSpec("expand_conv", c, rg, r) for (c, r), rg in zip(LADDER, D_RINGS)]
        if key == "E":
            layers = layers[:5] + [LayerSpec("dense", c) for c in (128, 512, 128, 2)]
    return NetworkSpec(key, tuple(layers), input_features)


def custom(channels: Iterable[int], rings=(0, 1, 2), input_features: int = 5,
           kind: str = "expand_conv", name: str = "Custom") -> NetworkSpec:
    """Single-repeat stack of ``kind`` layers with the given channel sequence."""
    rings = tuple(rings) if kind == "expand_conv" else ()
    layers = tuple(LayerSpec(kind, int(c), rings) for c in channels)
    return NetworkSpec(name, layers, input_features)


def required_rings(spec: NetworkSpec) -> set[int]:
    """Union of all expanded rings (empty when nothing is expanded)."""
    rings: set[int] = set()
    for layer in spec.layers:
        rings.update(layer.rings)
    return rings


def parameter_count(spec: NetworkSpec) -> int:
    return sum(p.data.size for p in instantiate(spec, 0).parameters)


class Network:
    """Instantiated network: a flat list of layers with their parameters."""

    def __init__(self, spec: NetworkSpec, modules: list, feature_names: tuple[str, ...] | None = None):
        self.spec = spec
        self.flat = spec.flat_layers()
        if len(modules) != len(self.flat):
            raise ConfigError("one module per flattened layer is required")
        self.modules = modules
        self.feature_names = tuple(feature_names) if feature_names else None

    def __repr__(self):
        return f"Network({self.spec.name}, layers={len(self.flat)}, params={self.n_parameters})"

    @property
    def parameters(self) -> list[nn.Tensor]:
        return [p for m in self.modules for p in m.parameters]

    @property
    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters)

    @property
    def rings(self) -> set[int]:
        return required_rings(self.spec)

    def zero_grad(self):
        for p in self.parameters:
            p.grad = None

    def forward(self, X, adj: RingAdjacency | None = None) -> nn.Tensor:
        """``(n, m)`` features -> ``(n, 2)`` logits tensor."""
        x = X if isinstance(X, nn.Tensor) else nn.Tensor(X)
        if x.data.ndim != 2 or x.shape[1] != self.spec.input_features:
            raise ShapeMismatchError(
                f"network expects (n, {self.spec.input_features}) features, got {x.shape}"
            )
        n = x.shape[0]
        selected: dict[tuple[int, ...], RingAdjacency] = {}
        last = len(self.flat) - 1
        for i, (layer, module) in enumerate(zip(self.flat, self.modules)):
            if layer.kind == "expand_conv":
                if adj is None:
                    raise ShapeMismatchError("ring adjacency is required for expand_conv layers")
                sub = selected.get(layer.rings)
                if sub is None:
                    sub = selected[layer.rings] = adj.select(layer.rings)
                x = nn.reshape(module(nn.expand(x, sub)), (n, layer.out_channels))
            elif layer.kind == "conv_only":
                x = nn.reshape(module(nn.reshape(x, (1,) + x.shape)), (n, layer.out_channels))
            else:
                x = module(x)
            if i != last:
                x = nn.relu(x)
        return x

    def loss(self, X, adj, targets, pos_weight: float = 3.0, form: str = "standard"):
        """Return ``(loss_tensor, logits_tensor)`` for one mesh."""
        logits = self.forward(X, adj)
        return nn.weighted_ce_loss(nn.pair_logit(logits), targets, pos_weight, form), logits

    def predict_proba(self, X, adj=None) -> np.ndarray:
        """``(n, 2)`` softmax probabilities."""
        return nn.softmax_rows(self.forward(X, adj).data)

    def get_state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters]

    def set_state(self, arrays) -> None:
        params = self.parameters
        if len(arrays) != len(params):
            raise ShapeMismatchError("state does not match network parameters")
        for p, a in zip(params, arrays):
            a = np.asarray(a, dtype=np.float64)
            if a.shape != p.shape:
                raise ShapeMismatchError(f"parameter shape {a.shape} != {p.shape}")
            p.data = a.copy()

    def to_dict(self, **extra) -> dict:
        d = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "spec": self.spec.to_dict(),
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "params": [{"shape": list(p.shape), "data": p.data.ravel().tolist()}
                       for p in self.parameters],
        }
        d.update(extra)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ConfigError("not a meshring checkpoint")
        if d.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {d.get('version')}")
        net = instantiate(NetworkSpec.from_dict(d["spec"]), 0, d.get("feature_names"))
        net.set_state([np.array(p["data"], dtype=np.float64).reshape(p["shape"]) for p in d["params"]])
        return net

    def save(self, path, **extra) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(**extra), fh)

    @classmethod
    def load(cls, path) -> "Network":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def instantiate(spec: NetworkSpec, seed: int = 0, feature_names=None) -> Network:
    """Create parameters (He-uniform weights, zero biases) deterministically from ``seed``."""
    if feature_names is not None and len(feature_names) != spec.input_features:
        raise ConfigError("feature_names length must equal spec.input_features")
    rng = np.random.default_rng(seed)
    modules = []
    c_in = spec.input_features
    for layer in spec.flat_layers():
        if layer.kind == "expand_conv":
            modules.append(nn.ConvRingLayer.init(rng, len(layer.rings), c_in, layer.out_channels))
        elif layer.kind == "conv_only":
            modules.append(nn.ConvRingLayer.init(rng, 1, c_in, layer.out_channels))
        else:
            modules.append(nn.DenseLayer.init(rng, c_in, layer.out_channels))
        c_in = layer.out_channels
    return Network(spec, modules, feature_names)

"""A small reverse-mode autodiff engine for the mesh network.

Only the operations the network needs are provided: ring expansion,
ring convolution, per-vertex dense layers, ReLU, reshape, the
two-channel-to-logit head and the weighted cross-entropy loss.  All
arithmetic is float64 and batch size is one mesh.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .exceptions import NumericalError, ShapeMismatchError
from .expansion import expand_array, expand_transpose
from .mesh import RingAdjacency


class Tensor:
    """An array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, parents: Sequence["Tensor"] = (), backward: Callable | None = None,
                 requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = tuple(parents)
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in self._parents)
        self.name = name

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate gradients into every upstream tensor that requires them."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def parameter(array, name: str | None = None) -> Tensor:
    return Tensor(np.array(array, dtype=np.float64), requires_grad=True, name=name)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return Tensor(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def expand(x: Tensor, adj: RingAdjacency) -> Tensor:
    """``(n, c) -> (R, n, c)`` per-ring neighbour means."""
    out = expand_array(x.data, adj)
    return Tensor(out, (x,), lambda g: (expand_transpose(g, adj),))


def conv_ring(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """``(R, n, c_in) -> (1, n, c_out)``; the kernel spans the ring axis only."""
    R, n, c_in = x.shape
    kR, kw, k_in, c_out = kernel.shape
    if (kR, kw, k_in) != (R, 1, c_in) or bias.shape != (c_out,):
        raise ShapeMismatchError(
            f"conv kernel {kernel.shape} / bias {bias.shape} incompatible with input {x.shape}"
        )
    flat = x.data.transpose(1, 0, 2).reshape(n, R * c_in)
    k2 = kernel.data.reshape(R * c_in, c_out)
    out = flat @ k2 + bias.data

    def backward(g):
        g = g.reshape(n, c_out)
        gx = (g @ k2.T).reshape(n, R, c_in).transpose(1, 0, 2)
        gk = (flat.T @ g).reshape(kernel.shape)
        return gx, gk, g.sum(axis=0)

    return Tensor(out[None], (x, kernel, bias), backward)


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Per-vertex affine map ``(n, c_in) -> (n, c_out)``."""
    if x.data.ndim != 2 or weights.shape[0] != x.shape[1] or bias.shape != (weights.shape[1],):
        raise ShapeMismatchError(
            f"dense weights {weights.shape} / bias {bias.shape} incompatible with input {x.shape}"
        )
    xd, wd = x.data, weights.data

    def backward(g):
        return g @ wd.T, xd.T @ g, g.sum(axis=0)

    return Tensor(xd @ wd + bias.data, (x, weights, bias), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def pair_logit(logits: Tensor) -> Tensor:
    """Positive-class logit ``channel1 - channel0`` of an ``(n, 2)`` grid."""
    if logits.data.ndim != 2 or logits.shape[1] != 2:
        raise ShapeMismatchError(f"expected (n, 2) logits, got {logits.shape}")

    def backward(g):
        return (np.column_stack([-g, g]),)

    return Tensor(logits.data[:, 1] - logits.data[:, 0], (logits,), backward)


def sigmoid(z):
    z = np.asarray(getattr(z, "data", z), dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax_rows(t):
    t = np.asarray(getattr(t, "data", t), dtype=np.float64)
    shifted = t - t.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def relu_array(t):
    return np.maximum(np.asarray(t, dtype=np.float64), 0.0)


LOSS_FORMS = ("standard", "literal")


def weighted_ce_loss(logit_pos: Tensor, targets, pos_weight: float = 3.0,
                     form: str = "standard") -> Tensor:
    """Mean weighted binary cross-entropy on positive-class logits.

    ``standard``: ``pos_weight*t*softplus(-z) + (1-t)*softplus(z)``, i.e.
    ``-[w t log s(z) + (1-t) log(1-s(z))]`` in overflow-free form.
    ``literal``: the negative term is ``(1-t)*(1-s(z))`` without the log,
    kept only for comparison runs.
    """
    if not isinstance(logit_pos, Tensor):
        logit_pos = Tensor(logit_pos)
    z = logit_pos.data
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != z.shape:
        raise ShapeMismatchError(f"targets {t.shape} vs logits {z.shape}")
    n = z.size
    s = sigmoid(z)
    pos_term = pos_weight * t * np.logaddexp(0.0, -z)
    if form == "standard":
        per_vertex = pos_term + (1.0 - t) * np.logaddexp(0.0, z)
        dz = pos_weight * t * (s - 1.0) + (1.0 - t) * s
    elif form == "literal":
        per_vertex = pos_term + (1.0 - t) * (1.0 - s)
        dz = pos_weight * t * (s - 1.0) - (1.0 - t) * s * (1.0 - s)
    else:
        raise ValueError(f"unknown loss form {form!r}; choose from {LOSS_FORMS}")
    value = per_vertex.mean()
    return Tensor(value, (logit_pos,), lambda g: (g * dz / n,))


# -- layers ---------------------------------------------------------------


def he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class ConvRingLayer:
    """Kernel ``(R, 1, c_in, c_out)`` collapsing R ring slots to one."""

    def __init__(self, kernel, bias):
        self.kernel = parameter(kernel, "kernel")
        self.bias = parameter(bias, "bias")
        if self.kernel.data.ndim != 4 or self.kernel.shape[1] != 1:
            raise ShapeMismatchError(f"conv kernel must be (R, 1, c_in, c_out), got {self.kernel.shape}")
        if self.bias.shape != (self.kernel.shape[3],):
            raise ShapeMismatchError("conv bias length must equal c_out")

    @classmethod
    def init(cls, rng, n_slots: int, c_in: int, c_out: int) -> "ConvRingLayer":
        kernel = he_uniform(rng, (n_slots, 1, c_in, c_out), n_slots * c_in)
        return cls(kernel, np.zeros(c_out))

    @property
    def n_slots(self) -> int:
        return self.kernel.shape[0]

    @property
    def parameters(self) -> list[Tensor]:
        return [self.kernel, self.bias]

    def __call__(self, x: Tensor) -> Tensor:
        return conv_ring(x, self.kernel, self.bias)


class DenseLayer:
    def __init__(self, weights, bias):
        self.weights = parameter(weights, "weights")
        self.bias = parameter(bias, "bias")
        if self.weights.data.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ShapeMismatchError("dense layer needs (c_in, c_out) weights and c_out bias")

    @classmethod
    def init(cls, rng, c_in: int, c_out: int) -> "DenseLayer":
        return cls(he_uniform(rng, (c_in, c_out), c_in), np.zeros(c_out))

    @property
    def parameters(self) -> list[Tensor]:
        return [self.weights, self.bias]

    def __call__(self, x: Tensor) -> Tensor:
        return dense(x, self.weights, self.bias)


def conv_ring_forward(x, layer: ConvRingLayer) -> Tensor:
    return layer(x if isinstance(x, Tensor) else Tensor(x))


def dense_forward(x, layer: DenseLayer) -> Tensor:
    return layer(x if isinstance(x, Tensor) else Tensor(x))


# -- optimisation ---------------------------------------------------------


@dataclass(frozen=True)
class SgdSchedule:
    """Plain gradient descent with step-wise learning-rate drops."""

    initial_lr: float = 0.01
    drops: tuple[tuple[int, float], ...] = ((5000, 0.003), (10000, 0.001))
    total_steps: int = 11500
    pos_weight: float = 3.0
    loss_form: str = "standard"

    def __post_init__(self):
        drops = tuple((int(s), float(r)) for s, r in self.drops)
        object.__setattr__(self, "drops", drops)
        steps = [s for s, _ in drops]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("learning-rate drop steps must be strictly increasing")
        if self.initial_lr <= 0 or any(r <= 0 for _, r in drops):
            raise ValueError("learning rates must be positive")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        if self.loss_form not in LOSS_FORMS:
            raise ValueError(f"loss_form must be one of {LOSS_FORMS}")

    def lr(self, step: int) -> float:
        rate = self.initial_lr
        for threshold, r in self.drops:
            if step >= threshold:
                rate = r
        return rate


def sgd_step(params: Iterable[Tensor], grads: Sequence[np.ndarray] | None,
             schedule: SgdSchedule, step: int) -> float:
    """In-place ``p -= lr(step) * g``.  Returns the rate used.

    With ``grads=None`` each parameter's ``.grad`` is used.  Nothing is
    updated when any gradient is non-finite.
    """
    if step < 0:
        raise ValueError("step must be >= 0")
    params = list(params)
    if grads is None:
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]
    grads = list(grads)
    if len(grads) != len(params):
        raise ShapeMismatchError("one gradient per parameter is required")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {i} at step {step}")
    rate = schedule.lr(step)
    for p, g in zip(params, grads):
        p.data -= rate * g
    return rate

"""Multi-layer perceptron with hand-written forward and backward passes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DimensionError, LabelError
from .tensor import log_softmax, matmul, softmax

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class MlpArchitecture:
    input_dim: int
    hidden_dims: Tuple[int, ...]
    num_classes: int
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ConfigError(f"layer widths must be positive: {self.dims}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")

    @property
    def dims(self):
        return (self.input_dim, *self.hidden_dims, self.num_classes)

    @property
    def num_layers(self):
        return len(self.hidden_dims) + 1

    def layer_shapes(self):
        d = self.dims
        return [((d[i + 1], d[i]), (d[i + 1],)) for i in range(self.num_layers)]


class ParamSet:
    """Ordered (weight, bias) pairs, one per layer; weights are (out, in).

    Arithmetic returns new ParamSets. Flattened iteration order is
    W0, b0, W1, b1, ... each in row-major order.
    """

    def __init__(self, layers: Sequence[Tuple[np.ndarray, np.ndarray]], activation="relu"):
        self.layers: List[Tuple[np.ndarray, np.ndarray]] = [
            (np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64)) for w, b in layers
        ]
        self.activation = activation

    @classmethod
    def zeros(cls, arch: MlpArchitecture):
        return cls([(np.zeros(ws), np.zeros(bs)) for ws, bs in arch.layer_shapes()], arch.activation)

    def arrays(self):
        for w, b in self.layers:
            yield w
            yield b

    def shapes(self):
        return [(w.shape, b.shape) for w, b in self.layers]

    @property
    def size(self):
        return sum(a.size for a in self.arrays())

    def _check(self, other):
        if self.shapes() != other.shapes():
            raise DimensionError(f"parameter shapes differ: {self.shapes()} vs {other.shapes()}")

    def _map(self, fn, other=None):
        if other is None:
            return ParamSet([(fn(w), fn(b)) for w, b in self.layers], self.activation)
        self._check(other)
        return ParamSet(
            [(fn(w, ow), fn(b, ob)) for (w, b), (ow, ob) in zip(self.layers, other.layers)],
            self.activation,
        )

    def __add__(self, other):
        return self._map(np.add, other)

    def __sub__(self, other):
        return self._map(np.subtract, other)

    def scale(self, alpha):
        return self._map(lambda a: alpha * a)

    def clone(self):
        return self._map(np.copy)

    def zeros_like(self):
        return self._map(np.zeros_like)

    def flatten(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, flat, like):
        layers, pos = [], 0
        for w, b in like.layers:
            nw = flat[pos:pos + w.size].reshape(w.shape)
            pos += w.size
            nb = flat[pos:pos + b.size].reshape(b.shape)
            pos += b.size
            layers.append((nw.copy(), nb.copy()))
        return cls(layers, like.activation)

    def equals(self, other):
        """Bitwise equality of every array."""
        return self.shapes() == other.shapes() and all(
            a.tobytes() == b.tobytes() for a, b in zip(self.arrays(), other.arrays())
        )

    def __repr__(self):
        dims = [self.layers[0][0].shape[1]] + [w.shape[0] for w, _ in self.layers] if self.layers else []
        return f"ParamSet({'-'.join(map(str, dims))}, {self.activation})"


@dataclass
class BatchGrad:
    grads: ParamSet
    loss: float
    logits: np.ndarray


def init_params(arch: MlpArchitecture, rng) -> ParamSet:
    """Fan-in scaled uniform weights, zero biases."""
    layers = []
    for (wshape, bshape) in arch.layer_shapes():
        fan_in = wshape[1]
        bound = np.sqrt((6.0 if arch.activation == "relu" else 1.0) / fan_in)
        layers.append((rng.uniform(-bound, bound, wshape), np.zeros(bshape)))
    return ParamSet(layers, arch.activation)


def _act(z, kind):
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _act_grad(z, h, kind):
    return (z > 0.0).astype(np.float64) if kind == "relu" else 1.0 - h * h


def _check_input(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    expected = params.layers[0][0].shape[1]
    if x.ndim != 2 or x.shape[1] != expected:
        raise DimensionError(f"input has shape {x.shape}, network expects (batch, {expected})")
    return x


def _trace(params, x):
    # returns layer inputs and pre-activations needed by backprop
    inputs, pres = [], []
    h = x
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        inputs.append(h)
        z = matmul(h, w.T) + b
        pres.append(z)
        h = z if i == last else _act(z, params.activation)
    return inputs, pres, h


def forward(params: ParamSet, x) -> np.ndarray:
    """Raw logits, shape (batch, num_classes)."""
    return _trace(params, _check_input(params, x))[2]


def features(params: ParamSet, x) -> np.ndarray:
    """Activations of the last hidden layer (the input to the output layer)."""
    inputs, _, _ = _trace(params, _check_input(params, x))
    return inputs[-1]


def _check_labels(labels, n, k):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise DimensionError(f"labels have shape {labels.shape}, expected ({n},)")
    bad = np.flatnonzero((labels < 0) | (labels >= k))
    if bad.size:
        i = int(bad[0])
        raise LabelError(f"label {labels[i]} at index {i} is outside [0, {k})")
    return labels.astype(np.int64)


def cross_entropy(logits, labels) -> float:
    logp = log_softmax(logits)
    return float(-logp[np.arange(len(labels)), labels].mean())


def loss_and_grad(params: ParamSet, x, labels) -> BatchGrad:
    """Mean softmax cross-entropy over the batch and its exact gradient."""
    x = _check_input(params, x)
    n = x.shape[0]
    k = params.layers[-1][0].shape[0]
    labels = _check_labels(labels, n, k)

    inputs, pres, logits = _trace(params, x)
    loss = cross_entropy(logits, labels)

    delta = softmax(logits)
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    ones = np.ones((1, n))
    grads = [None] * len(params.layers)
    for i in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[i]
        grads[i] = (matmul(delta.T, inputs[i]), matmul(ones, delta)[0])
        if i > 0:
            h = inputs[i]
            delta = matmul(delta, w) * _act_grad(pres[i - 1], h, params.activation)
    return BatchGrad(ParamSet(grads, params.activation), loss, logits)


def predict(params: ParamSet, x) -> np.ndarray:
    """Argmax class per row; ties go to the lowest index."""
    return np.argmax(forward(params, x), axis=1)

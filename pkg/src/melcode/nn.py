"""Dense feedforward networks trained by plain minibatch SGD.

Everything is float64 and row-major: a batch is a (B, width) array and a
layer computes ``act(x @ W.T + b)`` with ``W`` shaped (out, in).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, DivergenceError

LINEAR = "linear"
SIGMOID = "sigmoid"
ACTIVATIONS = (LINEAR, SIGMOID)


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class LayerParams:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = SIGMOID

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise DimensionError(f"weights {w.shape} and bias {b.shape} are inconsistent")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("layer parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return _activate(x @ self.weights.T + self.bias, self.activation)

    def __eq__(self, other):
        if not isinstance(other, LayerParams):
            return NotImplemented
        return (
            self.activation == other.activation
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.bias, other.bias)
        )

    __hash__ = None


@dataclass(frozen=True)
class DenseNet:
    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        for i, (a, b) in enumerate(zip(layers, layers[1:])):
            if a.n_out != b.n_in:
                raise DimensionError(
                    f"layer {i} outputs {a.n_out} but layer {i + 1} expects {b.n_in}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def widths(self) -> tuple:
        return (self.layers[0].n_in,) + tuple(layer.n_out for layer in self.layers)

    @property
    def activations(self) -> tuple:
        return tuple(layer.activation for layer in self.layers)

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def __len__(self):
        return len(self.layers)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 20
    epochs: int = 50
    learning_rate: float = 0.01
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")


PRETRAIN_DEFAULTS = TrainConfig(batch_size=20, epochs=50)
FINETUNE_DEFAULTS = TrainConfig(batch_size=100, epochs=100)


def _as_batch(net: DenseNet, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.n_in:
        raise DimensionError(f"input width {x.shape[-1]} does not match network input {net.n_in}")
    return x, single


def forward(net: DenseNet, x) -> np.ndarray:
    """Run ``x`` (a vector or a batch of rows) through every layer."""
    a, single = _as_batch(net, x)
    for layer in net.layers:
        a = layer.apply(a)
    return a[0] if single else a


def mse_loss(pred, target) -> float:
    """Batch mean of the per-frame mean squared error."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def _activate(z: np.ndarray, tag: str) -> np.ndarray:
    return sigmoid(z) if tag == SIGMOID else z


def _forward_trace(weights, biases, tags, x: np.ndarray) -> list:
    acts = [x]
    for w, b, tag in zip(weights, biases, tags):
        acts.append(_activate(acts[-1] @ w.T + b, tag))
    return acts


def _backprop(weights, tags, acts: list, target: np.ndarray) -> list:
    out = acts[-1]
    delta = 2.0 * (out - target) / out.size
    grads = []
    for i in range(len(weights) - 1, -1, -1):
        if tags[i] == SIGMOID:
            a = acts[i + 1]
            delta = delta * a * (1.0 - a)
        grads.append((delta.T @ acts[i], delta.sum(axis=0)))
        if i:
            delta = delta @ weights[i]
    grads.reverse()
    return grads


def _params(net: DenseNet):
    return (
        [layer.weights for layer in net.layers],
        [layer.bias for layer in net.layers],
        net.activations,
    )


def backward(net: DenseNet, x, target) -> list:
    """Gradients of :func:`mse_loss` w.r.t. every layer's (weights, bias)."""
    x, _ = _as_batch(net, x)
    target = np.asarray(target, dtype=np.float64).reshape(x.shape[0], -1)
    if target.shape[1] != net.n_out:
        raise DimensionError(f"target width {target.shape[1]} != network output {net.n_out}")
    weights, biases, tags = _params(net)
    return _backprop(weights, tags, _forward_trace(weights, biases, tags, x), target)


def sgd_train(
    net: DenseNet,
    inputs,
    targets,
    cfg: TrainConfig,
    hook: Optional[Callable[[int, float, DenseNet], None]] = None,
    input_transform: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> tuple[DenseNet, list]:
    """Minibatch gradient descent on mean squared error.

    ``input_transform`` is applied to every minibatch input before the
    forward pass (the denoising autoencoder uses it for fresh corruption).
    ``hook(epoch, mean_loss, net)`` runs after each epoch. Returns the trained
    copy of ``net`` and the per-epoch mean training loss, where each
    minibatch contributes the loss measured before its own update.
    """
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training data must be a non-empty 2-D array")
    if x.shape[0] != y.shape[0]:
        raise DimensionError("inputs and targets have different frame counts")
    if x.shape[1] != net.n_in or y.shape[1] != net.n_out:
        raise DimensionError(
            f"data widths ({x.shape[1]}, {y.shape[1]}) do not match network "
            f"({net.n_in}, {net.n_out})"
        )

    weights, biases, tags = _params(net)
    weights = [w.copy() for w in weights]
    biases = [b.copy() for b in biases]
    rng = np.random.default_rng(cfg.seed)
    n = x.shape[0]
    lr = cfg.learning_rate
    trace = []

    def snapshot():
        return DenseNet(tuple(LayerParams(w, b, t) for w, b, t in zip(weights, biases, tags)))

    # overflow is reported as DivergenceError below, not as a numpy warning
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            order = rng.permutation(n) if cfg.shuffle else np.arange(n)
            total = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                xb = x[idx]
                if input_transform is not None:
                    xb = input_transform(xb)
                acts = _forward_trace(weights, biases, tags, xb)
                loss = float(np.mean((acts[-1] - y[idx]) ** 2))
                if not np.isfinite(loss):
                    raise DivergenceError(epoch, loss)
                total += loss * len(idx)
                if lr:
                    for k, (gw, gb) in enumerate(_backprop(weights, tags, acts, y[idx])):
                        weights[k] -= lr * gw
                        biases[k] -= lr * gb
            mean_loss = total / n
            if not (np.isfinite(mean_loss) and all(np.all(np.isfinite(w)) for w in weights)):
                raise DivergenceError(epoch, mean_loss)
            trace.append(mean_loss)
            if hook is not None:
                hook(epoch, mean_loss, snapshot())
    return snapshot(), trace


@dataclass(frozen=True)
class Topology:
    """Layer widths plus one activation tag per parameterized layer.

    Without explicit tags every layer is sigmoid except the last, which is
    linear.
    """

    widths: tuple
    activations: Optional[tuple] = None

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2:
            raise ValueError("a topology needs at least two widths")
        if min(widths) < 1:
            raise ValueError("all widths must be >= 1")
        acts = self.activations
        if acts is None:
            acts = (SIGMOID,) * (len(widths) - 2) + (LINEAR,)
        acts = tuple(acts)
        if len(acts) != len(widths) - 1 or any(a not in ACTIVATIONS for a in acts):
            raise ValueError(f"need {len(widths) - 1} activation tags from {ACTIVATIONS}")
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "activations", acts)

    @classmethod
    def parse(cls, text: str) -> "Topology":
        """Parse ``"257x125x75x50"``."""
        try:
            return cls(tuple(int(part) for part in text.lower().split("x")))
        except ValueError as exc:
            raise ValueError(f"bad topology {text!r}: {exc}") from None

    def __str__(self):
        return "x".join(str(w) for w in self.widths)


def init_layer(n_in: int, n_out: int, activation: str, rng: np.random.Generator) -> LayerParams:
    bound = np.sqrt(6.0 / (n_in + n_out))
    if activation == SIGMOID:
        bound *= 4.0
    w = rng.uniform(-bound, bound, size=(n_out, n_in))
    return LayerParams(w, np.zeros(n_out), activation)


def init_net(topology: Topology, seed: int = 0) -> DenseNet:
    rng = np.random.default_rng(seed)
    w = topology.widths
    return DenseNet(tuple(
        init_layer(w[i], w[i + 1], act, rng) for i, act in enumerate(topology.activations)
    ))


def identity_net(width: int, n_layers: int = 1) -> DenseNet:
    """Exact identity map built from linear layers."""
    eye = np.eye(width)
    return DenseNet(tuple(LayerParams(eye, np.zeros(width), LINEAR) for _ in range(n_layers)))


def stack(nets: Sequence[DenseNet]) -> DenseNet:
    return DenseNet(tuple(layer for net in nets for layer in net.layers))

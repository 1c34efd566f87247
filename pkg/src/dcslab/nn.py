"""Minimal dense neural-network kernel.

Forward passes, manual backpropagation, vector-level Huber loss and plain
SGD -- everything the autoencoder codec needs, with a central-difference
gradient oracle to check the backprop path against.

All math is float64. Models are immutable value objects: updates build new
layers instead of mutating, so snapshots are safe to share across threads.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import kernels
from .errors import DimensionMismatchError


class Activation(IntEnum):
    IDENTITY = kernels.IDENTITY
    SIGMOID = kernels.SIGMOID
    RELU = kernels.RELU
    TANH = kernels.TANH

    @classmethod
    def from_name(cls, name: str) -> "Activation":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown activation {name!r}") from None


def _as_matrix(values, context: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{context} ndim", 2, arr.ndim)
    if not np.isfinite(arr).all():
        raise ValueError(f"{context} contains non-finite values")
    return arr


def _as_vector(values, context: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{context} ndim", 1, arr.ndim)
    if not np.isfinite(arr).all():
        raise ValueError(f"{context} contains non-finite values")
    return arr


@dataclass
class DenseLayer:
    """One fully connected layer: output = activation(weights @ x + bias)."""

    weights: np.ndarray  # (out_size, in_size)
    bias: np.ndarray  # (out_size,)
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        self.weights = _as_matrix(self.weights, "DenseLayer.weights")
        self.bias = _as_vector(self.bias, "DenseLayer.bias")
        self.activation = Activation(self.activation)
        if self.bias.shape[0] != self.weights.shape[0]:
            raise DimensionMismatchError(
                "DenseLayer bias length", self.weights.shape[0], self.bias.shape[0]
            )

    @property
    def in_size(self) -> int:
        return self.weights.shape[1]

    @property
    def out_size(self) -> int:
        return self.weights.shape[0]

    @property
    def param_count(self) -> int:
        return self.weights.size + self.bias.size


@dataclass
class Mlp:
    """A stack of dense layers; layer k feeds layer k+1."""

    layers: list[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_size != nxt.in_size:
                raise DimensionMismatchError(
                    "Mlp layer chaining", prev.out_size, nxt.in_size
                )

    @property
    def in_size(self) -> int:
        return self.layers[0].in_size

    @property
    def out_size(self) -> int:
        return self.layers[-1].out_size

    @property
    def param_count(self) -> int:
        return sum(layer.param_count for layer in self.layers)


@dataclass
class GradientSet:
    """Per-layer weight/bias gradients, shapes mirroring an Mlp."""

    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]

    def __post_init__(self):
        if len(self.weight_grads) != len(self.bias_grads):
            raise DimensionMismatchError(
                "GradientSet layer count", len(self.weight_grads), len(self.bias_grads)
            )
        for g in self.weight_grads + self.bias_grads:
            if not np.isfinite(g).all():
                raise ValueError("GradientSet contains non-finite values")

    def check_congruent(self, model: Mlp) -> None:
        if len(self.weight_grads) != len(model.layers):
            raise DimensionMismatchError(
                "GradientSet layer count", len(model.layers), len(self.weight_grads)
            )
        for layer, dW, db in zip(model.layers, self.weight_grads, self.bias_grads):
            if dW.shape != layer.weights.shape:
                raise DimensionMismatchError(
                    "weight gradient shape", layer.weights.shape, dW.shape
                )
            if db.shape != layer.bias.shape:
                raise DimensionMismatchError(
                    "bias gradient shape", layer.bias.shape, db.shape
                )


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def glorot_uniform(out_size: int, in_size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform init in +-sqrt(6/(fan_in+fan_out)); keeps layers well scaled."""
    limit = np.sqrt(6.0 / (in_size + out_size))
    return rng.uniform(-limit, limit, size=(out_size, in_size))


def init_dense(out_size: int, in_size: int, activation: Activation,
               rng: np.random.Generator) -> DenseLayer:
    return DenseLayer(glorot_uniform(out_size, in_size, rng),
                      np.zeros(out_size), activation)


def init_mlp(sizes: list[int], activations: list[Activation],
             rng: np.random.Generator) -> Mlp:
    """Build an Mlp with layer k mapping sizes[k] -> sizes[k+1]."""
    if len(activations) != len(sizes) - 1:
        raise DimensionMismatchError("init_mlp activations", len(sizes) - 1,
                                     len(activations))
    return Mlp([init_dense(sizes[k + 1], sizes[k], activations[k], rng)
                for k in range(len(sizes) - 1)])


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

def apply_activation(kind: Activation, z: np.ndarray) -> np.ndarray:
    z = _as_vector(z, "apply_activation input")
    return kernels.activate_batch(z[None, :], int(kind))[0]


def dense_forward(layer: DenseLayer, x) -> tuple[np.ndarray, np.ndarray]:
    """Return (pre_activation, output) so backprop can reuse the cache."""
    x = _as_vector(x, "dense_forward input")
    if x.shape[0] != layer.in_size:
        raise DimensionMismatchError("dense_forward input length",
                                     layer.in_size, x.shape[0])
    Z, A = kernels.dense_forward_batch(x[None, :], layer.weights, layer.bias,
                                       int(layer.activation))
    return Z[0], A[0]


def mlp_forward(model: Mlp, x) -> np.ndarray:
    a = _as_vector(x, "mlp_forward input")
    for layer in model.layers:
        _, a = dense_forward(layer, a)
    return a


def forward_batch(model: Mlp, X: np.ndarray):
    """Batched forward pass; returns (output, per-layer (input, pre_act) caches)."""
    A = np.ascontiguousarray(X, dtype=np.float64)
    caches = []
    for layer in model.layers:
        Z, A_next = kernels.dense_forward_batch(A, layer.weights, layer.bias,
                                                int(layer.activation))
        caches.append((A, Z))
        A = A_next
    return A, caches


def backward_batch(model: Mlp, caches, dOut: np.ndarray):
    """Backprop a batch given dL/d(output); returns (GradientSet, dL/d(input))."""
    weight_grads: list[np.ndarray] = [None] * len(model.layers)
    bias_grads: list[np.ndarray] = [None] * len(model.layers)
    dA = dOut
    for k in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[k]
        X_in, Z = caches[k]
        dW, db, dA = kernels.dense_backward_batch(X_in, layer.weights, Z, dA,
                                                  int(layer.activation))
        weight_grads[k] = dW
        bias_grads[k] = db
    return GradientSet(weight_grads, bias_grads), dA


# ---------------------------------------------------------------------------
# Huber loss (vector level: the branch is chosen by the L1 norm of the
# whole residual, not per element)
# ---------------------------------------------------------------------------

def _check_pair(x, x_r):
    x = _as_vector(x, "huber x")
    x_r = _as_vector(x_r, "huber x_r")
    if x.shape != x_r.shape:
        raise DimensionMismatchError("huber vector lengths", x.shape[0], x_r.shape[0])
    return x, x_r


def huber_loss(x, x_r, delta: float) -> float:
    """0.5*||r||_2^2 if ||r||_1 <= delta else delta*||r||_1 - 0.5*delta^2."""
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    x, x_r = _check_pair(x, x_r)
    losses, _ = kernels.huber_batch(x[None, :], x_r[None, :], float(delta))
    return float(losses[0])


def huber_grad(x, x_r, delta: float) -> np.ndarray:
    """Gradient of huber_loss with respect to x_r (quadratic branch at the boundary)."""
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    x, x_r = _check_pair(x, x_r)
    _, grads = kernels.huber_batch(x[None, :], x_r[None, :], float(delta))
    return grads[0]


# ---------------------------------------------------------------------------
# backprop and its finite-difference oracle
# ---------------------------------------------------------------------------

def mlp_backward(model: Mlp, x, output_grad) -> GradientSet:
    """Exact reverse-mode gradients of all weights and biases."""
    x = _as_vector(x, "mlp_backward input")
    output_grad = _as_vector(output_grad, "mlp_backward output_grad")
    if output_grad.shape[0] != model.out_size:
        raise DimensionMismatchError("mlp_backward output_grad length",
                                     model.out_size, output_grad.shape[0])
    _, caches = forward_batch(model, x[None, :])
    grads, _ = backward_batch(model, caches, output_grad[None, :])
    return grads


def _plain_activate(z: np.ndarray, kind: Activation) -> np.ndarray:
    # deliberately independent of the kernel backends
    if kind == Activation.IDENTITY:
        return z
    if kind == Activation.SIGMOID:
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind == Activation.RELU:
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _plain_forward(model: Mlp, x: np.ndarray) -> np.ndarray:
    a = x
    for layer in model.layers:
        a = _plain_activate(layer.weights @ a + layer.bias, layer.activation)
    return a


def _plain_huber(x: np.ndarray, x_r: np.ndarray, delta: float) -> float:
    r = x - x_r
    l1 = np.abs(r).sum()
    if l1 <= delta:
        return 0.5 * float(r @ r)
    return float(delta * l1 - 0.5 * delta * delta)


def finite_diff_grad(model: Mlp, x, target, delta: float, eps: float = 1e-5) -> GradientSet:
    """Central-difference gradients of huber_loss(target, forward(model, x)).

    Independent of the backprop path and of the kernel backends: uses its
    own plain-numpy forward pass and perturbs every parameter in turn.
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    x = _as_vector(x, "finite_diff_grad input")
    target = _as_vector(target, "finite_diff_grad target")
    work = copy.deepcopy(model)

    def loss() -> float:
        return _plain_huber(target, _plain_forward(work, x), delta)

    weight_grads = []
    bias_grads = []
    for layer in work.layers:
        for arr, out in ((layer.weights, weight_grads), (layer.bias, bias_grads)):
            grad = np.zeros_like(arr)
            flat = arr.reshape(-1)
            gflat = grad.reshape(-1)
            for idx in range(flat.shape[0]):
                orig = flat[idx]
                flat[idx] = orig + eps
                up = loss()
                flat[idx] = orig - eps
                down = loss()
                flat[idx] = orig
                gflat[idx] = (up - down) / (2.0 * eps)
            out.append(grad)
    return GradientSet(weight_grads, bias_grads)


def gradient_rel_error(a: GradientSet, b: GradientSet) -> float:
    """Worst per-tensor relative error: max|a-b| / max(|a|_inf, |b|_inf, 1e-8)."""
    worst = 0.0
    for ga, gb in zip(a.weight_grads + a.bias_grads, b.weight_grads + b.bias_grads):
        if ga.shape != gb.shape:
            raise DimensionMismatchError("gradient shapes", ga.shape, gb.shape)
        denom = max(np.max(np.abs(ga)), np.max(np.abs(gb)), 1e-8)
        worst = max(worst, float(np.max(np.abs(ga - gb)) / denom))
    return worst


# ---------------------------------------------------------------------------
# SGD
# ---------------------------------------------------------------------------

def sgd_step(model: Mlp, grads: GradientSet, learning_rate: float) -> Mlp:
    """theta <- theta - lr * grad for every parameter; returns a new Mlp."""
    if learning_rate < 0:
        raise ValueError(f"learning_rate must be >= 0, got {learning_rate}")
    grads.check_congruent(model)
    new_layers = [
        DenseLayer(layer.weights - learning_rate * dW,
                   layer.bias - learning_rate * db,
                   layer.activation)
        for layer, dW, db in zip(model.layers, grads.weight_grads, grads.bias_grads)
    ]
    return Mlp(new_layers)

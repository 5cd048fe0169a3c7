"""Shared-parameter dense encoder for both domains, plus SGD and lr schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, RangeError, ShapeError


@dataclass
class NetworkParams:
    layer_sizes: list
    weights: list = field(repr=False)
    biases: list = field(repr=False)

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("weights/biases do not match the number of layers")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            fan_in, fan_out = self.layer_sizes[i], self.layer_sizes[i + 1]
            if w.shape != (fan_in, fan_out) or b.shape != (1, fan_out):
                raise ShapeError(
                    f"layer {i}: expected weight {(fan_in, fan_out)} and bias {(1, fan_out)}, "
                    f"got {w.shape} and {b.shape}"
                )

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def output_dim(self):
        return self.layer_sizes[-1]

    def matrices(self):
        """Parameters in canonical order ``[W1, b1, W2, b2, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_matrices(cls, layer_sizes, matrices):
        return cls(list(layer_sizes), list(matrices[0::2]), list(matrices[1::2]))

    def copy(self):
        return NetworkParams.from_matrices(self.layer_sizes, [m.copy() for m in self.matrices()])


def init_network(layer_sizes, seed):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero biases."""
    sizes = list(layer_sizes)
    if len(sizes) < 2 or any(int(s) <= 0 for s in sizes):
        raise ConfigError(f"layer sizes must be >= 2 positive counts, got {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros((1, fan_out)))
    return NetworkParams(sizes, weights, biases)


def parameter_nodes(params):
    """Fresh gradient-tracking nodes for one forward/backward pass."""
    return [T.parameter(m) for m in params.matrices()]


def encode(params, x, nodes=None):
    """Forward pass: tanh hidden layers, linear output layer.

    Pass ``nodes`` from :func:`parameter_nodes` to get gradients; otherwise
    the parameters enter the graph as constants.
    """
    x = x if isinstance(x, T.Node) else T.constant(x)
    if x.shape[1] != params.input_dim:
        raise ShapeError(f"input width {x.shape[1]} does not match layer size {params.input_dim}")
    if nodes is None:
        nodes = [T.constant(m) for m in params.matrices()]
    h = x
    n_layers = len(params.weights)
    for i in range(n_layers):
        h = T.add(T.matmul(h, nodes[2 * i]), nodes[2 * i + 1])
        if i < n_layers - 1:
            h = T.tanh(h)
    return h


def encode_array(params, x):
    """Same map as :func:`encode` evaluated directly in numpy (no graph)."""
    h = np.asarray(x, dtype=np.float64)
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < n_layers - 1:
            h = np.tanh(h)
    return h


def sgd_step(params, gradients, lr):
    """Return new parameters ``p - lr * g``; ``gradients`` follows ``params.matrices()``."""
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    mats = params.matrices()
    if len(gradients) != len(mats):
        raise ShapeError(f"expected {len(mats)} gradients, got {len(gradients)}")
    updated = []
    for p, g in zip(mats, gradients):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        updated.append(p - lr * g)
    return NetworkParams.from_matrices(params.layer_sizes, updated)


@dataclass(frozen=True)
class LrSchedule:
    initial: float = 1e-4
    final: float = 1e-6
    total_epochs: int = 50

    def __post_init__(self):
        if not self.initial >= self.final > 0:
            raise ConfigError(f"need initial >= final > 0, got {self.initial}, {self.final}")
        if self.total_epochs < 0:
            raise ConfigError("total_epochs must be non-negative")


def lr_at(schedule, epoch):
    """Exponential interpolation between the initial and final rates."""
    if not 0 <= epoch < schedule.total_epochs:
        raise RangeError(f"epoch {epoch} outside [0, {schedule.total_epochs})")
    if schedule.total_epochs == 1:
        return schedule.initial
    frac = epoch / (schedule.total_epochs - 1)
    return schedule.initial * (schedule.final / schedule.initial) ** frac

"""Dense feed-forward stacks, the sigmoid hashing head and autoencoders.

Parameters are flattened layer by layer; within a layer the weight
matrix (fan_out x fan_in) comes first in row-major order, then the bias
vector.  All arithmetic is float64.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .errors import InvalidArgument, UnsupportedWidth

MAX_HEAD_WIDTH = 20
ACTIVATIONS = ("sigmoid", "tanh", "identity")


_TINY = np.finfo(np.float64).tiny
_ONE_BELOW = np.nextafter(1.0, 0.0)


def sigmoid(z):
    # split on sign so exp never overflows
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep outputs strictly inside (0, 1) even when saturated
    return np.clip(out, _TINY, _ONE_BELOW)


def activate(z, name):
    if name == "sigmoid":
        return sigmoid(z)
    if name == "tanh":
        return np.tanh(z)
    return z


def activation_slope(a, name):
    """Derivative of the activation expressed through its output ``a``."""
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(a)


@dataclass
class DenseLayer:
    weights: np.ndarray
    biases: np.ndarray
    activation: str = "sigmoid"

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        self.biases = np.array(self.biases, dtype=np.float64).reshape(-1)
        if self.activation not in ACTIVATIONS:
            raise InvalidArgument(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise InvalidArgument("weights must be fan_out x fan_in, biases fan_out")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise InvalidArgument("layer parameters must be finite")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]

    @property
    def n_params(self) -> int:
        return self.weights.size + self.biases.size

    def __call__(self, x):
        return activate(x @ self.weights.T + self.biases, self.activation)

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.biases.copy(), self.activation)


class Stack:
    """An ordered list of dense layers with chained dimensions."""

    def __init__(self, layers: Sequence[DenseLayer]):
        self.layers: List[DenseLayer] = list(layers)
        if not self.layers:
            raise InvalidArgument("a network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.fan_out != b.fan_in:
                raise InvalidArgument(
                    f"layer dims do not chain: {a.fan_out} -> {b.fan_in}")

    @property
    def dims(self) -> List[int]:
        return [self.layers[0].fan_in] + [l.fan_out for l in self.layers]

    @property
    def in_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def out_dim(self) -> int:
        return self.layers[-1].fan_out

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise InvalidArgument(
                f"input has shape {x.shape}, expected (n, {self.in_dim})")
        if not np.all(np.isfinite(x)):
            raise InvalidArgument("input contains non-finite values")
        return x

    def activations(self, x) -> List[np.ndarray]:
        """All layer outputs, input first: ``[x, a_1, ..., a_L]``."""
        acts = [self._check_input(x)]
        for layer in self.layers:
            acts.append(layer(acts[-1]))
        return acts

    def forward(self, x) -> np.ndarray:
        return self.activations(x)[-1]

    __call__ = forward

    def backward(self, acts, grad_out):
        """Reverse pass.

        Returns per-layer ``(dW, db)`` pairs and the gradient with respect
        to the stack input.
        """
        grads = [None] * len(self.layers)
        g = grad_out
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            delta = g * activation_slope(acts[idx + 1], layer.activation)
            grads[idx] = (delta.T @ acts[idx], delta.sum(axis=0))
            g = delta @ layer.weights
        return grads, g

    def param_count(self) -> int:
        return sum(l.n_params for l in self.layers)

    def flatten(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.weights.ravel(), l.biases])
                               for l in self.layers])

    def unflatten(self, vec) -> "Stack":
        """A copy of this stack with parameters taken from ``vec``."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.param_count(),):
            raise InvalidArgument(
                f"parameter vector has length {vec.size}, expected {self.param_count()}")
        layers, pos = [], 0
        for l in self.layers:
            w = vec[pos:pos + l.weights.size].reshape(l.weights.shape)
            pos += l.weights.size
            b = vec[pos:pos + l.fan_out]
            pos += l.fan_out
            layers.append(DenseLayer(w.copy(), b.copy(), l.activation))
        return self._rebuild(layers)

    def flatten_grads(self, grads) -> np.ndarray:
        return np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grads])

    def weight_mask(self) -> np.ndarray:
        """Boolean mask over the flat vector, True on weights (not biases)."""
        return np.concatenate([np.concatenate([np.ones(l.weights.size, bool),
                                               np.zeros(l.fan_out, bool)])
                               for l in self.layers])

    def _rebuild(self, layers):
        return type(self)(layers)

    def copy(self):
        return self._rebuild([l.copy() for l in self.layers])

    def __eq__(self, other):
        if type(self) is not type(other) or len(self.layers) != len(other.layers):
            return False
        return all(a.activation == b.activation
                   and np.array_equal(a.weights, b.weights)
                   and np.array_equal(a.biases, b.biases)
                   for a, b in zip(self.layers, other.layers))

    def __repr__(self):
        acts = ",".join(l.activation for l in self.layers)
        return f"{type(self).__name__}(dims={self.dims}, activations=[{acts}])"


class Network(Stack):
    """Stack whose last layer is the sigmoid hashing head."""

    def __init__(self, layers: Sequence[DenseLayer]):
        super().__init__(layers)
        if self.layers[-1].activation != "sigmoid":
            raise InvalidArgument("the final (hashing) layer must be sigmoid")
        if self.out_dim > MAX_HEAD_WIDTH:
            raise UnsupportedWidth(
                f"head width {self.out_dim} exceeds {MAX_HEAD_WIDTH}")

    @property
    def head_width(self) -> int:
        return self.out_dim


def _init_layers(layer_dims, seed, activations):
    dims = list(layer_dims)
    if len(dims) < 2:
        raise InvalidArgument("layer_dims needs at least an input and an output size")
    if any(int(d) != d or d < 1 for d in dims):
        raise InvalidArgument("all layer dims must be positive integers")
    if activations is None:
        activations = ["sigmoid"] * (len(dims) - 1)
    if len(activations) != len(dims) - 1:
        raise InvalidArgument("need one activation per layer")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
        w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_out, fan_in))
        layers.append(DenseLayer(w, np.zeros(fan_out), act))
    return layers


def init_network(layer_dims: Sequence[int], seed: int = 0,
                 hidden_activation: str = "sigmoid") -> Network:
    """Random network with a sigmoid head.

    Weights are N(0, 1/sqrt(fan_in)), biases zero.
    """
    dims = list(layer_dims)
    if len(dims) >= 2 and dims[-1] > MAX_HEAD_WIDTH:
        raise UnsupportedWidth(f"head width {dims[-1]} exceeds {MAX_HEAD_WIDTH}")
    acts = [hidden_activation] * (len(dims) - 2) + ["sigmoid"]
    return Network(_init_layers(dims, seed, acts))


def init_stack(layer_dims, seed=0, activations=None) -> Stack:
    return Stack(_init_layers(layer_dims, seed, activations))


def param_count(model) -> int:
    return model.param_count()


class Autoencoder:
    """Encoder/decoder pair with a hashing head on the latent layer."""

    def __init__(self, encoder: Stack, decoder: Stack, head: Network):
        if decoder.in_dim != encoder.out_dim:
            raise InvalidArgument("decoder input dim must equal latent dim")
        if decoder.out_dim != encoder.in_dim:
            raise InvalidArgument("decoder output dim must equal input dim")
        if head.in_dim != encoder.out_dim:
            raise InvalidArgument("head input dim must equal latent dim")
        if not isinstance(head, Network):
            head = Network(head.layers)
        self.encoder, self.decoder, self.head = encoder, decoder, head

    @property
    def parts(self):
        return (self.encoder, self.decoder, self.head)

    @property
    def in_dim(self) -> int:
        return self.encoder.in_dim

    @property
    def latent_dim(self) -> int:
        return self.encoder.out_dim

    @property
    def head_width(self) -> int:
        return self.head.out_dim

    def forward(self, x):
        """Return ``(latent, reconstruction, head_out)``."""
        z = self.encoder.forward(x)
        return z, self.decoder.forward(z), self.head.forward(z)

    __call__ = forward

    def param_count(self) -> int:
        return sum(p.param_count() for p in self.parts)

    def flatten(self) -> np.ndarray:
        return np.concatenate([p.flatten() for p in self.parts])

    def weight_mask(self) -> np.ndarray:
        return np.concatenate([p.weight_mask() for p in self.parts])

    def unflatten(self, vec) -> "Autoencoder":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.param_count(),):
            raise InvalidArgument(
                f"parameter vector has length {vec.size}, expected {self.param_count()}")
        out, pos = [], 0
        for p in self.parts:
            n = p.param_count()
            out.append(p.unflatten(vec[pos:pos + n]))
            pos += n
        return Autoencoder(*out)

    def copy(self) -> "Autoencoder":
        return Autoencoder(*(p.copy() for p in self.parts))

    def __eq__(self, other):
        return isinstance(other, Autoencoder) and all(
            a == b for a, b in zip(self.parts, other.parts))


def identity_stack(dim: int) -> Stack:
    return Stack([DenseLayer(np.eye(dim), np.zeros(dim), "identity")])


def init_autoencoder(encoder_dims, decoder_dims, head_width, seed=0,
                     hidden_activation="tanh", head_hidden=()) -> Autoencoder:
    """Random autoencoder.

    Encoder and decoder hidden layers use ``hidden_activation``; their
    final layers are linear.  The head maps latent -> (head_hidden...) -> k.
    """
    enc_dims, dec_dims = list(encoder_dims), list(decoder_dims)
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**31 - 1, size=3)
    enc = init_stack(enc_dims, int(seeds[0]),
                     [hidden_activation] * (len(enc_dims) - 2) + ["identity"])
    dec = init_stack(dec_dims, int(seeds[1]),
                     [hidden_activation] * (len(dec_dims) - 2) + ["identity"])
    head = init_network([enc_dims[-1], *head_hidden, head_width], int(seeds[2]))
    return Autoencoder(enc, dec, head)


def autoencoder_forward(ae: Autoencoder, x):
    return ae.forward(x)

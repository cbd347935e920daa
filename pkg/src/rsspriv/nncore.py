"""Small dense ReLU networks with manual backprop and Adam.

Checkpoint format (JSON, one object)::

    {"format": "rsspriv-mlp/1",
     "layer_dims": [d_in, h1, ..., d_out],
     "weights": [W_0, W_1, ...],   # W_l is a d_l x d_{l+1} nested list
     "biases":  [b_0, b_1, ...]}   # b_l is a list of length d_{l+1}

Python's ``json`` writes floats with ``repr`` so a dump/load round trip is
bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import DimensionError, as_rng

CHECKPOINT_FORMAT = "rsspriv-mlp/1"


class TrainingError(FloatingPointError):
    """Non-finite loss or gradient during training."""


class Mlp:
    """Fully connected network: ReLU between layers, linear output.

    Parameters are initialized He-uniform (``U(-sqrt(6/fan_in), sqrt(6/fan_in))``)
    with zero biases, all zeros with ``init="zeros"``, or He-uniform with a
    zero output layer with ``init="he-zero-out"`` (a residual block that
    starts at the identity).
    """

    def __init__(self, layer_dims, seed=None, init: str = "he"):
        dims = [int(d) for d in layer_dims]
        if len(dims) < 2 or min(dims) < 1:
            raise ValueError(f"invalid layer_dims {layer_dims}")
        self.layer_dims = dims
        rng = as_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        if init not in ("he", "zeros", "he-zero-out"):
            raise ValueError(f"unknown init {init!r}")
        last = len(dims) - 2
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            if init == "zeros" or (init == "he-zero-out" and i == last):
                w = np.zeros((fan_in, fan_out))
            else:
                lim = np.sqrt(6.0 / fan_in)
                w = rng.uniform(-lim, lim, size=(fan_in, fan_out))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))
        self._cache = None

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def params(self) -> list[np.ndarray]:
        """Parameters in ``[W_0, b_0, W_1, b_1, ...]`` order (live references)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def forward(self, x: np.ndarray, cache: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.layer_dims[0]:
            raise DimensionError(f"network expects n x {self.layer_dims[0]} input, got {x.shape}")
        inputs = []
        h = x
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        if cache:
            self._cache = inputs
        return h

    __call__ = forward

    def backward(self, dout: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Backprop ``dL/doutput`` through the cached forward pass.

        Returns gradients in ``params`` order and ``dL/dinput``.
        """
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        g = np.asarray(dout, dtype=np.float64)
        grads: list[np.ndarray] = [None] * (2 * self.n_layers)
        for i in range(self.n_layers - 1, -1, -1):
            h_in = self._cache[i]
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                # h_in is the post-ReLU activation of layer i-1
                g = g * (h_in > 0)
        return grads, g

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.layer_dims = list(self.layer_dims)
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other._cache = None
        return other

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "layer_dims": self.layer_dims,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {d.get('format')!r}")
        net = cls(d["layer_dims"], init="zeros")
        for i, (w, b) in enumerate(zip(d["weights"], d["biases"])):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.shape != net.weights[i].shape or b.shape != net.biases[i].shape:
                raise DimensionError(f"checkpoint layer {i} has wrong shape")
            net.weights[i] = w
            net.biases[i] = b
        return net

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "Mlp":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def forward(net: Mlp, batch: np.ndarray) -> np.ndarray:
    return net.forward(batch)


def backward(net: Mlp, loss_grad: np.ndarray) -> list[np.ndarray]:
    return net.backward(loss_grad)[0]


def adam_step(net: Mlp, grads: list[np.ndarray], state: AdamState) -> tuple[Mlp, AdamState]:
    """Bias-corrected Adam update, applied in place; returns ``(net, state)``."""
    params = net.params
    if len(grads) != len(params):
        raise DimensionError("gradient list does not match the network parameters")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient; aborting update")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return net, state


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross entropy of ``softmax(logits)`` and its gradient ``(probs - onehot) / n``."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_p = z - log_norm
    rows = np.arange(n)
    loss = -float(np.mean(log_p[rows, labels]))
    grad = np.exp(log_p)
    grad[rows, labels] -= 1.0
    return loss, grad / n

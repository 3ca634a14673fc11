"""Minimal dense networks with hand-written backward passes and Adam.

Float64 throughout: the gradients are checked against central finite
differences at 1e-5 relative tolerance, which float32 cannot survive.

Checkpoint layout (``save_checkpoint``): a ``.npz`` archive holding
``format_version``, a ``meta`` JSON string, and per network ``<name>/sizes``
(int layer widths), ``<name>/head`` (activation name) plus row-major
``<name>/W<i>`` and ``<name>/b<i>`` arrays. Loading rebuilds the exact
float64 parameters bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

_HEADS = ("identity", "tanh")
_FORMAT_VERSION = 1


class DenseNet:
    """Fully connected ReLU layers with an identity or tanh output head."""

    def __init__(self, sizes, head="identity", rng=None, final_scale=1.0):
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output size")
        if head not in _HEADS:
            raise ValueError(f"head must be one of {_HEADS}")
        self.sizes = tuple(int(s) for s in sizes)
        self.head = head
        self.weights = []
        self.biases = []
        if rng is None:
            rng = np.random.default_rng(0)
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            scale = final_scale if i == len(self.sizes) - 2 else 1.0
            self.weights.append(scale * rng.uniform(-bound, bound, (fan_in, fan_out)))
            self.biases.append(scale * rng.uniform(-bound, bound, fan_out))

    # ---------- forward / backward

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(x)
        return y

    def forward_cached(self, x):
        """Forward pass keeping the activations needed for backward."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        h = x[None] if squeeze else x
        acts = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                h = np.maximum(z, 0.0)
            elif self.head == "tanh":
                h = np.tanh(z)
            else:
                h = z
            acts.append(h)
        y = acts[-1][0] if squeeze else acts[-1]
        return y, (acts, squeeze)

    def backward_from_cache(self, cache, grad_out):
        """Gradients of sum(grad_out * output) w.r.t. parameters and input."""
        acts, squeeze = cache
        g = np.asarray(grad_out, dtype=np.float64)
        if squeeze:
            g = g[None]
        if self.head == "tanh":
            g = g * (1.0 - acts[-1] * acts[-1])
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = acts[i].T @ g
            grads_b[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (acts[i] > 0.0)
        grad_in = g[0] if squeeze else g
        return grads_w + grads_b, grad_in

    def input_grad_from_cache(self, cache, grad_out):
        """Input gradient only; skips the parameter-gradient matmuls."""
        acts, squeeze = cache
        g = np.asarray(grad_out, dtype=np.float64)
        if squeeze:
            g = g[None]
        if self.head == "tanh":
            g = g * (1.0 - acts[-1] * acts[-1])
        for i in range(len(self.weights) - 1, -1, -1):
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (acts[i] > 0.0)
        return g[0] if squeeze else g

    def backward(self, x, grad_out):
        """Convenience wrapper: forward then backward in one call."""
        _, cache = self.forward_cached(x)
        return self.backward_from_cache(cache, grad_out)

    # ---------- parameter plumbing

    def params(self):
        return self.weights + self.biases

    def copy(self) -> "DenseNet":
        out = DenseNet.__new__(DenseNet)
        out.sizes = self.sizes
        out.head = self.head
        out.weights = [w.copy() for w in self.weights]
        out.biases = [b.copy() for b in self.biases]
        return out


class Adam:
    """Adam with bias correction; state is explicit so updates are pure
    functions of (params, grads, state)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def soft_update(target: DenseNet, online: DenseNet, rate: float) -> None:
    """Polyak blend target <- (1 - rate) * target + rate * online."""
    for tp, op in zip(target.params(), online.params()):
        tp *= 1.0 - rate
        tp += rate * op


def save_checkpoint(path, nets: dict, meta: dict) -> None:
    """Write networks and a metadata dict to a single .npz archive."""
    arrays = {
        "format_version": np.array(_FORMAT_VERSION),
        "meta": np.array(json.dumps(meta, sort_keys=True)),
        "names": np.array(sorted(nets)),
    }
    for name, net in nets.items():
        arrays[f"{name}/sizes"] = np.array(net.sizes)
        arrays[f"{name}/head"] = np.array(net.head)
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            arrays[f"{name}/W{i}"] = w
            arrays[f"{name}/b{i}"] = b
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns (nets, meta) bit-identically."""
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        meta = json.loads(str(data["meta"]))
        nets = {}
        for name in data["names"]:
            name = str(name)
            net = DenseNet.__new__(DenseNet)
            net.sizes = tuple(int(s) for s in data[f"{name}/sizes"])
            net.head = str(data[f"{name}/head"])
            net.weights = [data[f"{name}/W{i}"] for i in range(len(net.sizes) - 1)]
            net.biases = [data[f"{name}/b{i}"] for i in range(len(net.sizes) - 1)]
            nets[name] = net
    return nets, meta

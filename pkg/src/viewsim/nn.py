"""Small fully-connected networks with hand-written backprop and Adam."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .csvio import FormatError, fmt_float

ACTIVATIONS = ("relu", "tanh", "identity")


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name, z, a, upstream):
    if name == "relu":
        return upstream * (z > 0)
    if name == "tanh":
        return upstream * (1.0 - a * a)
    return upstream


class Mlp:
    """Affine-then-activation stack.

    ``activations[i]`` is applied after layer ``i``; weights are stored as
    ``(fan_out, fan_in)`` matrices.  Inputs may be a single vector or a
    ``(batch, fan_in)`` matrix.
    """

    def __init__(self, layer_sizes: Sequence[int], activations: Sequence[str], seed=0, params=None):
        layer_sizes = [int(n) for n in layer_sizes]
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise ValueError(f"bad layer sizes {layer_sizes}")
        if len(activations) != len(layer_sizes) - 1:
            raise ValueError("need one activation per layer")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.layer_sizes = layer_sizes
        self.activations = list(activations)
        if params is None:
            rng = np.random.default_rng(seed)
            params = []
            for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
                bound = 1.0 / np.sqrt(fan_in)
                params.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
                params.append(rng.uniform(-bound, bound, fan_out))
        self.params = [np.array(p, dtype=float) for p in params]
        for i, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
            if self.params[2 * i].shape != (fan_out, fan_in) or self.params[2 * i + 1].shape != (fan_out,):
                raise ValueError(f"parameter shapes of layer {i} do not match layer sizes")

    @property
    def n_layers(self) -> int:
        return len(self.activations)

    def copy(self) -> "Mlp":
        return Mlp(self.layer_sizes, self.activations, params=[p.copy() for p in self.params])

    def _check_input(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.layer_sizes[0] or x.ndim > 2:
            raise ValueError(f"input has shape {x.shape}, expected (..., {self.layer_sizes[0]})")
        return x

    def forward(self, x) -> np.ndarray:
        x = self._check_input(x)
        a = x
        for i, name in enumerate(self.activations):
            a = _act(name, a @ self.params[2 * i].T + self.params[2 * i + 1])
        return a

    __call__ = forward

    def forward_cache(self, x):
        """Forward pass that also returns what :meth:`backward` needs."""
        x = self._check_input(x)
        single = x.ndim == 1
        a = np.atleast_2d(x)
        cache = [a]
        for i, name in enumerate(self.activations):
            z = a @ self.params[2 * i].T + self.params[2 * i + 1]
            a = _act(name, z)
            cache.append((z, a))
        out = a[0] if single else a
        return out, (single, cache)

    def backward(self, cache, upstream):
        """Reverse-mode gradients of ``sum(upstream * output)``.

        Returns ``(param_grads, input_grad)``; ``param_grads`` aligns with
        ``self.params``.
        """
        single, layers = cache
        g = np.atleast_2d(np.asarray(upstream, dtype=float))
        if g.shape != layers[-1][1].shape:
            raise ValueError(f"upstream gradient shape {g.shape} != output shape {layers[-1][1].shape}")
        grads = [None] * len(self.params)
        for i in range(self.n_layers - 1, -1, -1):
            z, a = layers[i + 1]
            g = _act_grad(self.activations[i], z, a, g)
            prev = layers[0] if i == 0 else layers[i][1]
            grads[2 * i] = g.T @ prev
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i]
        return grads, (g[0] if single else g)

    def to_lines(self) -> list:
        flat = np.concatenate([p.ravel() for p in self.params])
        return [
            "layer_sizes," + ",".join(str(n) for n in self.layer_sizes),
            "activations," + ",".join(self.activations),
            "params," + ",".join(fmt_float(v) for v in flat),
        ]

    @classmethod
    def from_lines(cls, lines) -> "Mlp":
        if len(lines) < 3:
            raise FormatError("network block needs layer_sizes, activations and params lines")
        tags = [line.split(",", 1)[0] for line in lines[:3]]
        if tags != ["layer_sizes", "activations", "params"]:
            raise FormatError(f"expected layer_sizes/activations/params lines, got {tags}")
        sizes = [int(t) for t in lines[0].split(",")[1:]]
        acts = lines[1].split(",")[1:]
        flat = np.array([float(t) for t in lines[2].split(",")[1:]])
        params, pos = [], 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            for shape in ((fan_out, fan_in), (fan_out,)):
                size = int(np.prod(shape))
                if pos + size > flat.size:
                    raise FormatError("too few parameters for the declared layer sizes")
                params.append(flat[pos:pos + size].reshape(shape))
                pos += size
        if pos != flat.size:
            raise FormatError("too many parameters for the declared layer sizes")
        return cls(sizes, acts, params=params)


class Adam:
    """Bias-corrected adaptive moment optimiser over a list of arrays (in place)."""

    def __init__(self, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads) -> None:
        if len(params) != len(self.m):
            raise ValueError("parameter list does not match optimiser state")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


def soft_update(target: Mlp, source: Mlp, tau: float) -> Mlp:
    """Polyak averaging ``target <- (1 - tau) * target + tau * source`` in place."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if target.layer_sizes != source.layer_sizes:
        raise ValueError("target and source networks differ in shape")
    for t, s in zip(target.params, source.params):
        t *= 1.0 - tau
        t += tau * s
    return target


def gradient_check(net: Mlp, x, loss: Callable, eps: float = 1e-5, floor: float = 1e-7) -> float:
    """Max relative error of backprop against central differences over every parameter.

    ``loss(output)`` must return ``(value, d value / d output)``.
    """
    if not 0.0 < eps < 1e-2:
        raise ValueError(f"eps must lie in (0, 1e-2), got {eps}")
    out, cache = net.forward_cache(x)
    _, dout = loss(out)
    analytic, _ = net.backward(cache, dout)
    worst = 0.0
    for p, g in zip(net.params, analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + eps
            lp = loss(net.forward(x))[0]
            flat[j] = old - eps
            lm = loss(net.forward(x))[0]
            flat[j] = old
            num = (lp - lm) / (2 * eps)
            err = abs(num - gflat[j]) / max(abs(num), abs(gflat[j]), floor)
            worst = max(worst, err)
    return worst


def squared_loss(target):
    """Loss helper for :func:`gradient_check`: ``0.5 * sum((out - target)^2)``."""
    target = np.asarray(target, dtype=float)

    def fn(out):
        r = out - target
        return 0.5 * float(np.sum(r * r)), r

    return fn

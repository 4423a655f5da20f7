"""Layers with explicit forward/backward passes.

Tensors are (batch, channel, row, col).  Group features keep their |S|
orientations contiguous: feature f, orientation a lives at channel f*|S| + a.
"""
from __future__ import annotations

import numpy as np

from ..group2d import Group2D
from ..kernels import (
    _synthesis_tensor,
    groupconv_weights,
    groupconv_weights_grad,
    init_beta,
    lifting_weights,
    lifting_weights_grad,
)
from .conv import ShapeError, correlate2d, correlate2d_backward


class Layer:
    params: dict
    grads: dict

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x, train=True):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def zero_grad(self):
        for k, v in self.params.items():
            g = self.grads.get(k)
            if g is None or g.shape != v.shape:
                self.grads[k] = np.zeros_like(v)
            else:
                g.fill(0.0)

    def state(self) -> dict:
        """Arrays saved in checkpoints (params plus buffers)."""
        return dict(self.params)

    def load_state(self, state: dict):
        for k, v in state.items():
            self.params[k] = np.array(v, dtype=float)
        self.zero_grad()


class LiftingConv(Layer):
    """Planar image -> group features; one synthesized kernel per element."""

    def __init__(self, group: Group2D, in_ch: int, out_ch: int, h: float = 1.0, rng=None):
        super().__init__()
        self.group, self.in_ch, self.out_ch, self.h = group, in_ch, out_ch, h
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["beta"] = init_beta(out_ch, in_ch, 1, rng)[:, :, 0]
        self.zero_grad()

    @property
    def T(self):
        return _synthesis_tensor(self.group.n, self.group.with_reflections, float(self.h))

    def weights(self):
        return lifting_weights(self.params["beta"], self.T)

    def forward(self, x, train=True):
        if x.shape[1] != self.in_ch:
            raise ShapeError(f"lifting expects {self.in_ch} channels, got {x.shape[1]}")
        self._x = x
        self._w = self.weights().astype(x.dtype, copy=False)
        out, self._cache = correlate2d(x, self._w, return_cache=True)
        return out

    def backward(self, grad):
        gx, gw = correlate2d_backward(grad, self._x, self._w, cache=self._cache)
        self.grads["beta"] += lifting_weights_grad(gw, self.T, self.in_ch)
        self._cache = None
        return gx


class GroupConv(Layer):
    """Group features -> group features with channel re-indexing by A*k."""

    def __init__(self, group: Group2D, in_ch: int, out_ch: int, h: float = 1.0, rng=None):
        super().__init__()
        self.group, self.in_ch, self.out_ch, self.h = group, in_ch, out_ch, h
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["beta"] = init_beta(out_ch, in_ch, len(group), rng)
        self.zero_grad()

    @property
    def T(self):
        return _synthesis_tensor(self.group.n, self.group.with_reflections, float(self.h))

    def weights(self):
        return groupconv_weights(self.params["beta"], self.T, self.group)

    def forward(self, x, train=True):
        g = len(self.group)
        if x.shape[1] != self.in_ch * g:
            raise ShapeError(f"group conv expects {self.in_ch * g} channels, got {x.shape[1]}")
        self._x = x
        self._w = self.weights().astype(x.dtype, copy=False)
        out, self._cache = correlate2d(x, self._w, return_cache=True)
        return out

    def backward(self, grad):
        gx, gw = correlate2d_backward(grad, self._x, self._w, cache=self._cache)
        self.grads["beta"] += groupconv_weights_grad(gw, self.T, self.group, self.in_ch)
        self._cache = None
        return gx


class Conv2d(Layer):
    """Plain pixel-basis convolution (baseline models); He-initialized, no bias."""

    def __init__(self, in_ch: int, out_ch: int, k: int = 3, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = rng.normal(0.0, np.sqrt(2.0 / (in_ch * k * k)), size=(out_ch, in_ch, k, k))
        self.zero_grad()

    def forward(self, x, train=True):
        self._x = x
        self._w = self.params["weight"].astype(x.dtype, copy=False)
        out, self._cache = correlate2d(x, self._w, return_cache=True)
        return out

    def backward(self, grad):
        gx, gw = correlate2d_backward(grad, self._x, self._w, cache=self._cache)
        self.grads["weight"] += gw
        self._cache = None
        return gx


class GroupBatchNorm(Layer):
    """Batch norm with one (scale, bias) and one statistic per feature.

    Statistics pool the batch, both spatial axes and the ``arity``
    orientation channels of each feature.
    """

    def __init__(self, features: int, arity: int = 1, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.features, self.arity, self.momentum, self.eps = features, arity, momentum, eps
        self.params["scale"] = np.ones(features)
        self.params["bias"] = np.zeros(features)
        self.running_mean = np.zeros(features)
        self.running_var = np.ones(features)
        self.zero_grad()

    def _grouped(self, x):
        n, c, hh, ww = x.shape
        if c != self.features * self.arity:
            raise ShapeError(f"batch norm expects {self.features * self.arity} channels, got {c}")
        return x.reshape(n, self.features, self.arity, hh, ww)

    def forward(self, x, train=True):
        xg = self._grouped(x)
        axes = (0, 2, 3, 4)
        if train:
            mean = xg.mean(axis=axes)
            var = xg.var(axis=axes)
            m = xg.size / self.features
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var * m / max(m - 1, 1)
        else:
            mean, var = self.running_mean, self.running_var
        shape = (1, -1, 1, 1, 1)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (xg - mean.reshape(shape)) * inv.reshape(shape)
        self._xhat, self._inv, self._train = xhat, inv, train
        out = xhat * self.params["scale"].reshape(shape) + self.params["bias"].reshape(shape)
        return out.reshape(x.shape).astype(x.dtype, copy=False)

    def backward(self, grad):
        shape = (1, -1, 1, 1, 1)
        gg = self._grouped(grad)
        axes = (0, 2, 3, 4)
        xhat = self._xhat
        self.grads["scale"] += (gg * xhat).sum(axis=axes)
        self.grads["bias"] += gg.sum(axis=axes)
        gxhat = gg * self.params["scale"].reshape(shape)
        if not self._train:
            gx = gxhat * self._inv.reshape(shape)
        else:
            gx = self._inv.reshape(shape) * (
                gxhat - gxhat.mean(axis=axes, keepdims=True)
                - xhat * (gxhat * xhat).mean(axis=axes, keepdims=True)
            )
        return gx.reshape(grad.shape).astype(grad.dtype, copy=False)

    def state(self):
        return {**self.params, "running_mean": self.running_mean, "running_var": self.running_var}

    def load_state(self, state):
        for k in ("scale", "bias"):
            self.params[k] = np.array(state[k], dtype=float)
        self.running_mean = np.array(state["running_mean"], dtype=float)
        self.running_var = np.array(state["running_var"], dtype=float)
        self.zero_grad()


class ReLU(Layer):
    def forward(self, x, train=True):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


class MaxPool2d(Layer):
    """Non-overlapping k x k max pooling; the first maximum in a window wins ties."""

    def __init__(self, k: int = 2):
        super().__init__()
        self.k = k

    def forward(self, x, train=True):
        n, c, hh, ww = x.shape
        k = self.k
        if hh % k or ww % k:
            raise ShapeError(f"spatial size {(hh, ww)} not divisible by pool size {k}")
        win = x.reshape(n, c, hh // k, k, ww // k, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, hh // k, ww // k, k * k)
        self._arg = win.argmax(axis=-1)
        self._shape = x.shape
        return np.take_along_axis(win, self._arg[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        n, c, hh, ww = self._shape
        k = self.k
        win = np.zeros((n, c, hh // k, ww // k, k * k), dtype=grad.dtype)
        np.put_along_axis(win, self._arg[..., None], grad[..., None], axis=-1)
        return win.reshape(n, c, hh // k, ww // k, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(self._shape)


class OrientationPool(Layer):
    """Max over the orientation channels of each feature."""

    def __init__(self, arity: int):
        super().__init__()
        self.arity = arity

    def forward(self, x, train=True):
        n, c, hh, ww = x.shape
        if c % self.arity:
            raise ShapeError(f"{c} channels not divisible by orientation arity {self.arity}")
        xg = x.reshape(n, c // self.arity, self.arity, hh, ww)
        self._arg = xg.argmax(axis=2)
        self._shape = x.shape
        return np.take_along_axis(xg, self._arg[:, :, None], axis=2)[:, :, 0]

    def backward(self, grad):
        n, c, hh, ww = self._shape
        out = np.zeros((n, c // self.arity, self.arity, hh, ww), dtype=grad.dtype)
        np.put_along_axis(out, self._arg[:, :, None], grad[:, :, None], axis=2)
        return out.reshape(self._shape)


class GlobalAvgPool(Layer):
    def forward(self, x, train=True):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, grad):
        n, c, hh, ww = self._shape
        return np.broadcast_to(grad[:, :, None, None] / (hh * ww), self._shape).copy()


class Dropout(Layer):
    def __init__(self, rate: float, rng=None):
        super().__init__()
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def forward(self, x, train=True):
        if not train or self.rate == 0:
            self._mask = None
            return x
        self._mask = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


class Dense(Layer):
    """Fully connected layer with Xavier-uniform initialization."""

    def __init__(self, in_features: int, out_features: int, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        limit = np.sqrt(6.0 / (in_features + out_features))
        self.params["weight"] = rng.uniform(-limit, limit, size=(in_features, out_features))
        self.params["bias"] = np.zeros(out_features)
        self.zero_grad()

    def forward(self, x, train=True):
        self._x = x
        return x @ self.params["weight"].astype(x.dtype, copy=False) + self.params["bias"].astype(x.dtype, copy=False)

    def backward(self, grad):
        self.grads["weight"] += self._x.T @ grad
        self.grads["bias"] += grad.sum(axis=0)
        return grad @ self.params["weight"].T.astype(grad.dtype, copy=False)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient with respect to the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train=True):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    __call__ = forward

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def parameters(self):
        """(layer_index, name, array, grad) for every trainable array."""
        out = []
        for i, layer in enumerate(self.layers):
            for name, p in layer.params.items():
                out.append((i, name, p, layer.grads[name]))
        return out

    def num_parameters(self) -> int:
        return int(sum(p.size for _, _, p, _ in self.parameters()))

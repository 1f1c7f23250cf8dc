"""Stateful layers with explicit backward passes.

A layer caches what it needs during ``forward`` and writes parameter
gradients into ``Param.grad`` during ``backward`` (overwriting, not
accumulating). Calling ``backward`` without a preceding ``forward`` raises.
"""

from __future__ import annotations

import numpy as np

from . import functional as F


class Param:
    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = data
        self.grad = np.zeros_like(data)

    @property
    def shape(self):
        return self.data.shape


def glorot(rng, shape, fan_in, fan_out, dtype):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape).astype(dtype)


class Layer:
    name = "layer"

    def params(self) -> dict[str, Param]:
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x, train: bool = False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def _need_cache(self):
        if getattr(self, "_cache", None) is None:
            raise RuntimeError(f"{type(self).__name__}.backward called before forward")
        return self._cache


class Conv1d(Layer):
    def __init__(self, c_in, c_out, k, rng, dtype=np.float32):
        self.c_in, self.c_out, self.k = c_in, c_out, k
        self.W = Param(glorot(rng, (c_out, c_in, k), c_in * k, c_out * k, dtype))
        self.b = Param(np.zeros(c_out, dtype=dtype))
        self._cache = None

    def params(self):
        return {"W": self.W, "b": self.b}

    def forward(self, x, train=False):
        y, self._cache = F.conv1d_forward(x, self.W.data, self.b.data)
        return y

    def backward(self, dy):
        dx, self.W.grad, self.b.grad = F.conv1d_backward(dy, self._need_cache())
        return dx


class BatchNorm1d(Layer):
    def __init__(self, channels, dtype=np.float32, momentum=0.1, eps=1e-5):
        self.gamma = Param(np.ones(channels, dtype=dtype))
        self.beta = Param(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum, self.eps = momentum, eps
        self._cache = None

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, train=False):
        y, self._cache = F.batchnorm_forward(
            x, self.gamma.data, self.beta.data, self.running_mean, self.running_var,
            train=train, momentum=self.momentum, eps=self.eps,
        )
        return y

    def backward(self, dy):
        dx, self.gamma.grad, self.beta.grad = F.batchnorm_backward(dy, self._need_cache())
        return dx


class ReLU(Layer):
    _cache = None

    def forward(self, x, train=False):
        y, self._cache = F.relu_forward(x)
        return y

    def backward(self, dy):
        return F.relu_backward(dy, self._need_cache())


class MaxPool1d(Layer):
    _cache = None

    def forward(self, x, train=False):
        y, self._cache = F.maxpool1d_forward(x)
        return y

    def backward(self, dy):
        return F.maxpool1d_backward(dy, self._need_cache())


class Dense(Layer):
    def __init__(self, d_in, d_out, rng, dtype=np.float32):
        self.W = Param(glorot(rng, (d_in, d_out), d_in, d_out, dtype))
        self.b = Param(np.zeros(d_out, dtype=dtype))
        self._cache = None

    def params(self):
        return {"W": self.W, "b": self.b}

    def forward(self, x, train=False):
        y, self._cache = F.dense_forward(x, self.W.data, self.b.data)
        return y

    def backward(self, dy):
        dx, self.W.grad, self.b.grad = F.dense_backward(dy, self._need_cache(), self.W.data)
        return dx


class Dropout(Layer):
    def __init__(self, rate, rng):
        self.rate = rate
        self.rng = rng
        self._cache = None
        self._ran = False

    def forward(self, x, train=False):
        y, self._cache = F.dropout_forward(x, self.rate, train=train, rng=self.rng)
        self._ran = True
        return y

    def backward(self, dy):
        if not self._ran:
            raise RuntimeError("Dropout.backward called before forward")
        return F.dropout_backward(dy, self._cache)


class Softmax(Layer):
    _cache = None

    def forward(self, x, train=False):
        y, self._cache = F.softmax_forward(x)
        return y

    def backward(self, dy):
        return F.softmax_backward(dy, self._need_cache())


class Flatten(Layer):
    """(C, L, N) -> (N, C*L), channel-major per sample."""

    _cache = None

    def forward(self, x, train=False):
        self._cache = x.shape
        C, L, N = x.shape
        return x.transpose(2, 0, 1).reshape(N, C * L)

    def backward(self, dy):
        C, L, N = self._need_cache()
        return dy.reshape(N, C, L).transpose(1, 2, 0)


class ToSequence(Layer):
    """(C, L, N) feature map -> (T=L, N, D=C) sequence for the LSTM."""

    _cache = None

    def forward(self, x, train=False):
        self._cache = True
        return x.transpose(1, 2, 0)

    def backward(self, dy):
        self._need_cache()
        return dy.transpose(2, 0, 1)


class LSTM(Layer):
    def __init__(self, d_in, units, rng, dtype=np.float32, return_sequences=True,
                 init_scale=0.08, forget_bias=1.0):
        H = units
        self.d_in, self.units, self.return_sequences = d_in, units, return_sequences
        self.Wx = Param(rng.uniform(-init_scale, init_scale, (d_in, 4 * H)).astype(dtype))
        self.Wh = Param(rng.uniform(-init_scale, init_scale, (H, 4 * H)).astype(dtype))
        b = np.zeros(4 * H, dtype=dtype)
        b[H:2 * H] = forget_bias
        self.b = Param(b)
        self._cache = None

    def params(self):
        return {"Wx": self.Wx, "Wh": self.Wh, "b": self.b}

    def forward(self, x, train=False):
        hs, self._cache = F.lstm_forward(x, self.Wx.data, self.Wh.data, self.b.data)
        return hs if self.return_sequences else hs[-1]

    def backward(self, dy):
        cache = self._need_cache()
        if not self.return_sequences:
            T = cache[0].shape[0]
            full = np.zeros((T,) + dy.shape, dtype=dy.dtype)
            full[-1] = dy
            dy = full
        dx, self.Wx.grad, self.Wh.grad, self.b.grad = F.lstm_backward(dy, cache)
        return dx


class Sequential(Layer):
    def __init__(self, layers: list[tuple[str, Layer]]):
        self.layers = list(layers)

    def named_layers(self, prefix=""):
        for name, layer in self.layers:
            full = f"{prefix}{name}"
            if isinstance(layer, (Sequential, Branches)):
                yield from layer.named_layers(full + ".")
            else:
                yield full, layer

    def forward(self, x, train=False):
        for _, layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dy):
        for _, layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


class Branches(Layer):
    """Parallel branches over a shared input, joined by depth concatenation."""

    def __init__(self, branches: list[tuple[str, Sequential]]):
        self.branches = list(branches)
        self._offsets = None

    def named_layers(self, prefix=""):
        for name, br in self.branches:
            yield from br.named_layers(f"{prefix}{name}.")

    def forward(self, x, train=False):
        outs = [br.forward(x, train) for _, br in self.branches]
        y, self._offsets = F.depthcat_forward(outs)
        return y

    def backward(self, dy):
        if self._offsets is None:
            raise RuntimeError("Branches.backward called before forward")
        parts = F.depthcat_backward(dy, self._offsets)
        dx = None
        for (_, br), g in zip(self.branches, parts):
            d = br.backward(g)
            dx = d if dx is None else dx + d
        return dx

"""Layers with explicit forward/backward passes over batched float64 arrays.

Per-sample shapes exclude the leading batch axis. Images are ``(C, H, W)``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    kind = "layer"

    def __init__(self):
        self.params = []
        self.grads = []

    def build(self, in_shape, rng):
        """Allocate parameters and return the output shape."""
        return in_shape

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def to_dict(self):
        return {"type": self.kind}

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.to_dict().items() if k != "type")
        return f"{type(self).__name__}({args})"


def _fan_in_uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2D(Layer):
    """Valid-padding 2-D convolution: ``out = floor((in - kernel) / stride) + 1``."""

    kind = "conv2d"

    def __init__(self, in_ch, out_ch, kernel, stride=1):
        super().__init__()
        self.in_ch, self.out_ch, self.kernel, self.stride = int(in_ch), int(out_ch), int(kernel), int(stride)
        if min(self.in_ch, self.out_ch, self.kernel, self.stride) < 1:
            raise ValueError(f"invalid Conv2D configuration {self.to_dict()}")

    def to_dict(self):
        return {"type": self.kind, "in_ch": self.in_ch, "out_ch": self.out_ch,
                "kernel": self.kernel, "stride": self.stride}

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ValueError(f"Conv2D expects a (C, H, W) input, got {in_shape}")
        c, h, w = in_shape
        if c != self.in_ch:
            raise ValueError(f"Conv2D expects {self.in_ch} input channels, got {c}")
        if h < self.kernel or w < self.kernel:
            raise ValueError(f"Conv2D kernel {self.kernel} larger than input {h}x{w}")
        return (
            self.out_ch,
            (h - self.kernel) // self.stride + 1,
            (w - self.kernel) // self.stride + 1,
        )

    def build(self, in_shape, rng):
        out = self.out_shape(in_shape)
        fan_in = self.in_ch * self.kernel * self.kernel
        self.W = _fan_in_uniform(rng, (self.out_ch, self.in_ch, self.kernel, self.kernel), fan_in)
        self.b = np.zeros(self.out_ch)
        self.params = [self.W, self.b]
        self.grads = [np.zeros_like(self.W), np.zeros_like(self.b)]
        return out

    def forward(self, x):
        k, s = self.kernel, self.stride
        n = x.shape[0]
        win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        ho, wo = win.shape[2], win.shape[3]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, -1)
        out = cols @ self.W.reshape(self.out_ch, -1).T + self.b
        self._cache = (x.shape, cols, ho, wo)
        return out.reshape(n, ho, wo, self.out_ch).transpose(0, 3, 1, 2)

    def backward(self, dy, need_input_grad=True):
        x_shape, cols, ho, wo = self._cache
        k, s = self.kernel, self.stride
        n = x_shape[0]
        dmat = dy.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
        self.grads[0][...] = (dmat.T @ cols).reshape(self.W.shape)
        self.grads[1][...] = dmat.sum(axis=0)
        if not need_input_grad:
            return None
        dcols = (dmat @ self.W.reshape(self.out_ch, -1)).reshape(n, ho, wo, self.in_ch, k, k)
        dx = np.zeros(x_shape)
        for i in range(k):
            for j in range(k):
                dx[:, :, i : i + s * ho : s, j : j + s * wo : s] += dcols[..., i, j].transpose(0, 3, 1, 2)
        return dx


class Dense(Layer):
    kind = "dense"

    def __init__(self, units):
        super().__init__()
        self.units = int(units)
        if self.units < 1:
            raise ValueError(f"Dense units must be >= 1, got {units}")

    def to_dict(self):
        return {"type": self.kind, "units": self.units}

    def build(self, in_shape, rng):
        if len(in_shape) != 1:
            raise ValueError(f"Dense expects a flat input, got shape {in_shape}")
        self.W = _fan_in_uniform(rng, (in_shape[0], self.units), in_shape[0])
        self.b = np.zeros(self.units)
        self.params = [self.W, self.b]
        self.grads = [np.zeros_like(self.W), np.zeros_like(self.b)]
        return (self.units,)

    def forward(self, x):
        self._x = x
        return x @ self.W + self.b

    def backward(self, dy):
        self.grads[0][...] = self._x.T @ dy
        self.grads[1][...] = dy.sum(axis=0)
        return dy @ self.W.T


class LeakyReLU(Layer):
    kind = "leaky_relu"

    def __init__(self, slope=0.01):
        super().__init__()
        self.slope = float(slope)

    def to_dict(self):
        return {"type": self.kind, "slope": self.slope}

    def forward(self, x):
        self._x = x
        if 0.0 <= self.slope <= 1.0:
            return np.maximum(x, self.slope * x)
        return np.where(x < 0, self.slope * x, x)

    def backward(self, dy):
        return np.where(self._x < 0, self.slope * dy, dy)


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy):
        return dy * (1.0 - self._y**2)


class Flatten(Layer):
    kind = "flatten"

    def build(self, in_shape, rng):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class ConcatAux(Layer):
    """Appends the auxiliary vector (positions, and the action for critics)."""

    kind = "concat_aux"

    def __init__(self, aux_len):
        super().__init__()
        self.aux_len = int(aux_len)
        if self.aux_len < 0:
            raise ValueError("aux_len must be >= 0")

    def to_dict(self):
        return {"type": self.kind, "aux_len": self.aux_len}

    def build(self, in_shape, rng):
        if len(in_shape) != 1:
            raise ValueError(f"ConcatAux must follow Flatten, got input shape {in_shape}")
        self._split = in_shape[0]
        return (in_shape[0] + self.aux_len,)

    def forward(self, x, aux):
        return np.concatenate([x, aux], axis=1)

    def backward(self, dy):
        return dy[:, : self._split], dy[:, self._split :]


LAYER_TYPES = {cls.kind: cls for cls in (Conv2D, Dense, LeakyReLU, Tanh, Flatten, ConcatAux)}


def layer_from_dict(d):
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in LAYER_TYPES:
        raise ValueError(f"unknown layer type {kind!r}; expected one of {sorted(LAYER_TYPES)}")
    return LAYER_TYPES[kind](**d)

"""Stateful layers wrapping the kernels in :mod:`skelact.nn.functional`."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functional as F


@dataclass(eq=False)
class Parameter:
    """A trainable tensor with its gradient and SGD momentum buffer."""

    name: str
    value: np.ndarray
    decay: bool = True
    grad: np.ndarray = field(init=False)
    momentum_buffer: np.ndarray = field(init=False)

    def __post_init__(self):
        self.grad = np.zeros_like(self.value)
        self.momentum_buffer = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0


@dataclass(eq=False)
class BatchNormState:
    gamma: Parameter
    beta: Parameter
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1
    training: bool = True

    @classmethod
    def create(cls, name, channels, dtype=np.float64, eps=1e-5, momentum=0.1):
        if eps <= 0:
            raise ValueError("batch norm epsilon must be positive")
        if not 0 < momentum < 1:
            raise ValueError("batch norm momentum must lie in (0, 1)")
        return cls(
            gamma=Parameter(f"{name}.gamma", np.ones(channels, dtype=dtype), decay=False),
            beta=Parameter(f"{name}.beta", np.zeros(channels, dtype=dtype), decay=False),
            running_mean=np.zeros(channels, dtype=np.float64),
            running_var=np.ones(channels, dtype=np.float64),
            eps=eps,
            momentum=momentum,
        )


class Conv2d:
    def __init__(self, name, c_in, c_out, stride=1, rng=None, dtype=np.float64):
        rng = np.random.default_rng() if rng is None else rng
        std = np.sqrt(2.0 / (c_out * 9))
        w = rng.normal(0.0, std, size=(c_out, c_in, 3, 3)).astype(dtype)
        self.weight = Parameter(f"{name}.weight", w)
        self.stride = stride
        self._cache = None

    def parameters(self):
        return [self.weight]

    def forward(self, x, training=False):
        out, self._cache = F.conv2d_forward(x, self.weight.value, self.stride)
        return out

    def backward(self, dout):
        dx, dw = F.conv2d_backward(dout, self._cache)
        self.weight.grad += dw
        self._cache = None
        return dx


class BatchNorm2d:
    def __init__(self, name, channels, dtype=np.float64):
        self.state = BatchNormState.create(name, channels, dtype=dtype)
        self._cache = None

    def parameters(self):
        return [self.state.gamma, self.state.beta]

    def forward(self, x, training=False):
        self.state.training = training
        out, self._cache = F.batch_norm_forward(
            x, self.state.gamma.value, self.state.beta.value, self.state, training
        )
        return out

    def backward(self, dout):
        dx, dgamma, dbeta = F.batch_norm_backward(dout, self._cache)
        self.state.gamma.grad += dgamma
        self.state.beta.grad += dbeta
        self._cache = None
        return dx


class Linear:
    def __init__(self, name, d_in, d_out, rng=None, dtype=np.float64):
        rng = np.random.default_rng() if rng is None else rng
        bound = 1.0 / np.sqrt(d_in)
        w = rng.uniform(-bound, bound, size=(d_out, d_in)).astype(dtype)
        self.weight = Parameter(f"{name}.weight", w)
        self.bias = Parameter(f"{name}.bias", np.zeros(d_out, dtype=dtype), decay=False)
        self._cache = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, training=False):
        out, self._cache = F.linear_forward(x, self.weight.value, self.bias.value)
        return out

    def backward(self, dout):
        dx, dw, db = F.linear_backward(dout, self._cache)
        self.weight.grad += dw
        self.bias.grad += db
        self._cache = None
        return dx

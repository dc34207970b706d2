"""Layers with explicit forward/backward passes over (batch, length, channels) arrays."""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SELUConfig:
    a: float = 1.6732632423543772
    scale: float = 1.0507009873554805

    def __post_init__(self):
        if self.a <= 0 or self.scale <= 0:
            raise ValueError("SELU constants must be positive")


def activate(name: str, z: np.ndarray, selu: SELUConfig) -> np.ndarray:
    if name == "linear":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "selu":
        return selu.scale * np.where(z > 0, z, selu.a * np.expm1(np.minimum(z, 0.0)))
    raise ValueError(f"unknown activation {name!r}")


def activate_grad(name: str, z: np.ndarray, selu: SELUConfig) -> np.ndarray:
    if name == "linear":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "selu":
        return selu.scale * np.where(z > 0, 1.0, selu.a * np.exp(np.minimum(z, 0.0)))
    raise ValueError(f"unknown activation {name!r}")


class Layer:
    kind: ClassVar[str] = ""
    n_params: ClassVar[int] = 0

    def out_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def param_shapes(self, in_shape: tuple) -> list[tuple]:
        return []

    def init_params(self, in_shape: tuple, rng: np.random.Generator) -> list[np.ndarray]:
        return []

    def forward(self, x, params, train, rng, selu):
        """Return ``(output, cache)``."""
        raise NotImplementedError

    def backward(self, dy, cache, params, selu):
        """Return ``(dx, param_grads)``."""
        raise NotImplementedError

    def spec(self) -> dict:
        d = {"type": self.kind}
        d.update(self.__dict__)
        return d


@dataclass(frozen=True)
class ZeroPad1d(Layer):
    pad: int = 1
    kind: ClassVar[str] = "zeropad1d"

    def out_shape(self, in_shape):
        return (in_shape[0] + 2 * self.pad, in_shape[1])

    def forward(self, x, params, train, rng, selu):
        return np.pad(x, ((0, 0), (self.pad, self.pad), (0, 0))), None

    def backward(self, dy, cache, params, selu):
        return dy[:, self.pad:dy.shape[1] - self.pad, :], []


@dataclass(frozen=True)
class Conv1d(Layer):
    filters: int
    kernel: int = 3
    stride: int = 1
    activation: str = "relu"
    kind: ClassVar[str] = "conv1d"
    n_params: ClassVar[int] = 2

    def out_shape(self, in_shape):
        length = (in_shape[0] - self.kernel) // self.stride + 1
        if length <= 0:
            raise ShapeMismatch(f"conv1d kernel {self.kernel} longer than input {in_shape[0]}")
        return (length, self.filters)

    def param_shapes(self, in_shape):
        return [(in_shape[1] * self.kernel, self.filters), (self.filters,)]

    def init_params(self, in_shape, rng):
        fan_in = self.kernel * in_shape[1]
        w = rng.standard_normal((in_shape[1] * self.kernel, self.filters)) * np.sqrt(2.0 / fan_in)
        return [w, np.zeros(self.filters)]

    def forward(self, x, params, train, rng, selu):
        w, b = params
        n, length, c = x.shape
        win = sliding_window_view(x, self.kernel, axis=1)[:, ::self.stride]  # (n, L', c, k)
        lout = win.shape[1]
        cols = np.ascontiguousarray(win).reshape(n * lout, c * self.kernel)
        z = (cols @ w + b).reshape(n, lout, self.filters)
        return activate(self.activation, z, selu), (x.shape, cols, z)

    def backward(self, dy, cache, params, selu):
        w, _ = params
        in_shape, cols, z = cache
        n, length, c = in_shape
        dz = dy * activate_grad(self.activation, z, selu)
        lout = dz.shape[1]
        dz2 = dz.reshape(n * lout, self.filters)
        dw = cols.T @ dz2
        db = dz2.sum(axis=0)
        dcols = (dz2 @ w.T).reshape(n, lout, c, self.kernel)
        dx = np.zeros(in_shape)
        span = self.stride * (lout - 1) + 1
        for j in range(self.kernel):
            dx[:, j:j + span:self.stride, :] += dcols[..., j]
        return dx, [dw, db]


@dataclass(frozen=True)
class MaxPool1d(Layer):
    size: int = 2
    stride: int = 2
    kind: ClassVar[str] = "maxpool1d"

    def out_shape(self, in_shape):
        if self.stride <= 0 or (in_shape[0] - self.size) % self.stride != 0:
            raise ShapeMismatch(
                f"pool stride {self.stride} must evenly tile length {in_shape[0]} with size {self.size}")
        return ((in_shape[0] - self.size) // self.stride + 1, in_shape[1])

    def forward(self, x, params, train, rng, selu):
        if self.size == self.stride and x.shape[1] % self.size == 0:
            n, length, c = x.shape
            win = x.reshape(n, length // self.size, self.size, c).transpose(0, 1, 3, 2)
        else:
            win = sliding_window_view(x, self.size, axis=1)[:, ::self.stride]
        arg = win.argmax(axis=-1)
        y = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        return y, (x.shape, arg)

    def backward(self, dy, cache, params, selu):
        in_shape, arg = cache
        dx = np.zeros(in_shape)
        lout = dy.shape[1]
        span = self.stride * (lout - 1) + 1
        for j in range(self.size):
            dx[:, j:j + span:self.stride, :] += np.where(arg == j, dy, 0.0)
        return dx, []


@dataclass(frozen=True)
class Flatten(Layer):
    kind: ClassVar[str] = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, params, train, rng, selu):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache, params, selu):
        return dy.reshape(cache), []


@dataclass(frozen=True)
class Dense(Layer):
    units: int
    activation: str = "selu"
    kind: ClassVar[str] = "dense"
    n_params: ClassVar[int] = 2

    def out_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeMismatch("dense layer needs a flat input")
        return (self.units,)

    def param_shapes(self, in_shape):
        return [(in_shape[0], self.units), (self.units,)]

    def init_params(self, in_shape, rng):
        w = rng.standard_normal((in_shape[0], self.units)) * np.sqrt(2.0 / in_shape[0])
        return [w, np.zeros(self.units)]

    def forward(self, x, params, train, rng, selu):
        w, b = params
        z = x @ w + b
        return activate(self.activation, z, selu), (x, z)

    def backward(self, dy, cache, params, selu):
        w, _ = params
        x, z = cache
        dz = dy * activate_grad(self.activation, z, selu)
        return dz @ w.T, [x.T @ dz, dz.sum(axis=0)]


@dataclass(frozen=True)
class Dropout(Layer):
    p: float = 0.5
    kind: ClassVar[str] = "dropout"

    def forward(self, x, params, train, rng, selu):
        if not train or self.p == 0.0:
            return x, None
        keep = (rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * keep, keep

    def backward(self, dy, cache, params, selu):
        return (dy if cache is None else dy * cache), []


LAYER_TYPES = {cls.kind: cls for cls in (ZeroPad1d, Conv1d, MaxPool1d, Flatten, Dense, Dropout)}


def layer_from_spec(spec: dict) -> Layer:
    spec = dict(spec)
    cls = LAYER_TYPES[spec.pop("type")]
    return cls(**spec)

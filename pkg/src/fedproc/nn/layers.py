"""Layer specifications, shape arithmetic, initialization and forward."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from ..errors import ConfigurationError
from . import tensor as T
from .tensor import Tensor


@dataclass(frozen=True)
class Linear:
    in_features: int
    out_features: int

    def param_shapes(self):
        return (("weight", (self.in_features, self.out_features)), ("bias", (self.out_features,)))

    def output_shape(self, shape):
        if tuple(shape) != (self.in_features,):
            raise ConfigurationError(f"{self}: expected input ({self.in_features},), got {tuple(shape)}")
        return (self.out_features,)

    @property
    def fan_in(self) -> int:
        return self.in_features


@dataclass(frozen=True)
class Conv2d:
    in_channels: int
    out_channels: int
    kernel_size: int = 5

    def param_shapes(self):
        k = self.kernel_size
        return (
            ("weight", (k, k, self.in_channels, self.out_channels)),
            ("bias", (self.out_channels,)),
        )

    def output_shape(self, shape):
        if len(shape) != 3 or shape[2] != self.in_channels:
            raise ConfigurationError(f"{self}: expected (H, W, {self.in_channels}) input, got {tuple(shape)}")
        h, w, _ = shape
        k = self.kernel_size
        if h < k or w < k:
            raise ConfigurationError(f"{self}: input {h}x{w} smaller than kernel")
        return (h - k + 1, w - k + 1, self.out_channels)

    @property
    def fan_in(self) -> int:
        return self.kernel_size * self.kernel_size * self.in_channels


@dataclass(frozen=True)
class ReLU:
    def param_shapes(self):
        return ()

    def output_shape(self, shape):
        return tuple(shape)


@dataclass(frozen=True)
class MaxPool2d:
    size: int = 2

    def param_shapes(self):
        return ()

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ConfigurationError(f"{self}: expected (H, W, C) input, got {tuple(shape)}")
        h, w, c = shape
        if h < self.size or w < self.size:
            raise ConfigurationError(f"{self}: input {h}x{w} smaller than window")
        return (h // self.size, w // self.size, c)


@dataclass(frozen=True)
class Flatten:
    def param_shapes(self):
        return ()

    def output_shape(self, shape):
        return (math.prod(shape),)


LayerSpec = Union[Linear, Conv2d, ReLU, MaxPool2d, Flatten]


def init_layer(layer: LayerSpec, rng: np.random.Generator) -> list[np.ndarray]:
    """Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)), weight then bias."""
    shapes = layer.param_shapes()
    if not shapes:
        return []
    bound = 1.0 / math.sqrt(layer.fan_in)
    return [rng.uniform(-bound, bound, size=shape) for _, shape in shapes]


def layer_forward(layer: LayerSpec, params: Sequence[Tensor], x: Tensor, name: str = "") -> Tensor:
    """Apply one layer to a batch ``x`` of shape (N, *input_shape)."""
    label = name or type(layer).__name__
    expected = layer.param_shapes()
    if len(params) != len(expected) or any(
        p.shape != shape for p, (_, shape) in zip(params, expected)
    ):
        got = [p.shape for p in params]
        raise ConfigurationError(f"layer {label}: parameters {got} do not match {[s for _, s in expected]}")
    try:
        layer.output_shape(x.shape[1:])
    except ConfigurationError as exc:
        raise ConfigurationError(f"layer {label}: {exc}") from None
    if isinstance(layer, Linear):
        w, b = params
        return T.add(T.matmul(x, w), b)
    if isinstance(layer, Conv2d):
        w, b = params
        return T.conv2d(x, w, b)
    if isinstance(layer, ReLU):
        return T.relu(x)
    if isinstance(layer, MaxPool2d):
        return T.max_pool2d(x, layer.size)
    if isinstance(layer, Flatten):
        return T.reshape(x, (x.shape[0], -1))
    raise ConfigurationError(f"layer {label}: unknown layer type {type(layer).__name__}")

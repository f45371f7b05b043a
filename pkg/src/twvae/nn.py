"""Layer parameter containers and initializers built on the tensor engine."""

from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor, conv1d, fully_connected


def _fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


class Linear:
    """Fully connected layer, weight [out, in] plus bias [out]."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 bias: bool = True):
        self.weight = Tensor(_fan_in_uniform(rng, (out_features, in_features), in_features),
                             requires_grad=True)
        self.bias = None
        if bias:
            self.bias = Tensor(_fan_in_uniform(rng, (out_features,), in_features),
                               requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return fully_connected(x, self.weight, self.bias)


class Conv1d:
    """Strided 1-D convolution layer, kernels [out, in, k] plus bias [out]."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int, rng: np.random.Generator):
        fan_in = in_channels * kernel_size
        self.weight = Tensor(_fan_in_uniform(rng, (out_channels, in_channels, kernel_size), fan_in),
                             requires_grad=True)
        self.bias = Tensor(_fan_in_uniform(rng, (out_channels,), fan_in), requires_grad=True)
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.weight, self.bias, stride=self.stride)


def init_time_layer(width: int, slope_magnitude: float, margin: float,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Initialize the first layer of the canonical-time network.

    Each unit gets slope +/-slope_magnitude (equal probability) and a bias
    placing its activation root uniformly in [-margin, 1 + margin], so the
    layer's modeling capacity covers the whole [0, 1] input range instead of
    clustering around 0.

    Returns (weights [width, 1], biases [width]).
    """
    if width < 1:
        raise ValueError("time layer width must be >= 1")
    if slope_magnitude <= 0.0:
        raise ValueError("slope magnitude must be positive")
    if margin < 0.0:
        raise ValueError("margin must be nonnegative")
    signs = rng.integers(0, 2, size=width) * 2 - 1
    weights = (signs * slope_magnitude).astype(np.float64).reshape(width, 1)
    roots = rng.uniform(-margin, 1.0 + margin, width)
    biases = -weights[:, 0] * roots
    return weights, biases


def time_input_linear(width: int, slope_magnitude: float, margin: float,
                      rng: np.random.Generator) -> Linear:
    """Linear layer 1 -> width using the custom time initialization."""
    layer = Linear.__new__(Linear)
    weights, biases = init_time_layer(width, slope_magnitude, margin, rng)
    layer.weight = Tensor(weights, requires_grad=True)
    layer.bias = Tensor(biases, requires_grad=True)
    return layer

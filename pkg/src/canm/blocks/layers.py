"""Convolution and normalisation layers shared by every block."""

from __future__ import annotations

from typing import Optional

from canm.errors import ShapeError
from canm.tensor import ops
from canm.tensor.module import Module, Parameter
from canm.tensor.tensor import Tensor

Shape = tuple[int, int, int, int]


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        stride: int = 1,
        padding: int = 0,
        groups: int = 1,
        bias: bool = True,
        weight_init: str = "trunc_normal",
        bias_fill: Optional[float] = None,
    ):
        super().__init__()
        if in_channels % groups or out_channels % groups:
            raise ShapeError(f"Conv2d: channels {in_channels}->{out_channels} not divisible by groups={groups}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        self.groups = groups
        self.weight = Parameter((out_channels, in_channels // groups, kernel_size, kernel_size), init=weight_init)
        self.bias = Parameter((out_channels,), init="zeros", fill=bias_fill) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)

    def output_shape(self, shape: Shape) -> Shape:
        B, _, H, W = shape
        Ho = (H + 2 * self.padding - self.kernel_size) // self.stride + 1
        Wo = (W + 2 * self.padding - self.kernel_size) // self.stride + 1
        return (B, self.out_channels, Ho, Wo)

    def macs(self, shape: Shape) -> int:
        B, O, Ho, Wo = self.output_shape(shape)
        return B * O * Ho * Wo * (self.in_channels // self.groups) * self.kernel_size**2


def conv1x1(in_channels: int, out_channels: int, **kwargs) -> Conv2d:
    return Conv2d(in_channels, out_channels, 1, **kwargs)


def conv3x3(in_channels: int, out_channels: int, **kwargs) -> Conv2d:
    return Conv2d(in_channels, out_channels, 3, padding=1, **kwargs)


class ChannelLayerNorm(Module):
    """LayerNorm over the channel axis at every pixel."""

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = Parameter((1, channels, 1, 1), init="ones")
        self.bias = Parameter((1, channels, 1, 1), init="zeros")

    def forward(self, x: Tensor) -> Tensor:
        centered = x - ops.mean(x, axis=1, keepdims=True)
        var = ops.mean(centered * centered, axis=1, keepdims=True)
        return centered * ops.power(var + self.eps, -0.5) * self.weight + self.bias

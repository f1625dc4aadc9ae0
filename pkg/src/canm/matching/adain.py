"""Adaptive instance normalisation of reference features, re-styled by
spatial gamma/beta maps predicted from the degraded features."""

from __future__ import annotations

from canm.blocks.layers import Shape, conv3x3
from canm.errors import ShapeError
from canm.tensor import ops
from canm.tensor.module import Module
from canm.tensor.tensor import Tensor

EPS = 1e-8


def instance_norm(x: Tensor, eps: float = EPS) -> Tensor:
    """Per sample and channel: zero mean, population std 1 (std floored at eps)."""
    centered = x - ops.mean(x, axis=(2, 3), keepdims=True)
    sigma = ops.sqrt_floor(ops.mean(centered * centered, axis=(2, 3), keepdims=True), eps)
    return centered / sigma


class AdaIN(Module):
    def __init__(self, channels: int):
        super().__init__()
        self.gamma = conv3x3(channels, channels, bias_fill=1.0)
        self.beta = conv3x3(channels, channels)

    def forward(self, x_ref: Tensor, x_deg: Tensor) -> Tensor:
        if x_ref.shape != x_deg.shape:
            raise ShapeError(f"adain: reference {x_ref.shape} and degraded {x_deg.shape} differ")
        return self.gamma(x_deg) * instance_norm(x_ref) + self.beta(x_deg)

    def macs(self, shape: Shape) -> int:
        return self.gamma.macs(shape) + self.beta.macs(shape)


def adain(x_ref: Tensor, x_deg: Tensor, params: AdaIN) -> Tensor:
    return params(x_ref, x_deg)

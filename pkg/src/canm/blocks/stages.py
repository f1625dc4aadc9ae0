"""Encoder and decoder stages built from compound transformer layers."""

from __future__ import annotations

from typing import Optional, Union

from canm.blocks.ctl import CompoundTransformerLayer
from canm.blocks.layers import Conv2d, Shape, conv1x1
from canm.errors import ShapeError, UsageError
from canm.tensor import ops
from canm.tensor.module import Module
from canm.tensor.tensor import Tensor


def _layers(channels: int, depth: int, **layer_kwargs) -> list[CompoundTransformerLayer]:
    # odd positions (2nd, 4th, ...) use shifted windows
    return [CompoundTransformerLayer(channels, shift=bool(i % 2), **layer_kwargs) for i in range(depth)]


class EncoderStage(Module):
    """CTLs at level k; ``forward`` returns (level-k feature, input of level k+1).
    The last stage has no downsampler and returns None as the second item."""

    def __init__(self, channels: int, depth: int, next_channels: Optional[int], **layer_kwargs):
        super().__init__()
        self.channels = channels
        self.ctl = _layers(channels, depth, **layer_kwargs)
        self.down = (
            Conv2d(channels, next_channels, 2, stride=2) if next_channels is not None else None
        )

    def forward(self, x: Tensor) -> tuple[Tensor, Optional[Tensor]]:
        for layer in self.ctl:
            x = layer(x)
        return x, (self.down(x) if self.down is not None else None)

    def macs(self, shape: Shape) -> int:
        total = sum(layer.macs(shape) for layer in self.ctl)
        return total + (self.down.macs(shape) if self.down is not None else 0)


class DecoderStage(Module):
    """1x1 expand to 4C, pixel shuffle to 2x, concat with the skip, 1x1 fuse, CTLs."""

    def __init__(self, channels: int, deep_channels: int, depth: int, **layer_kwargs):
        super().__init__()
        self.channels = channels
        self.deep_channels = deep_channels
        self.up = conv1x1(deep_channels, 4 * channels)
        self.fuse = conv1x1(2 * channels, channels)
        self.ctl = _layers(channels, depth, **layer_kwargs)

    def forward(self, deep: Tensor, skip: Optional[Tensor] = None) -> Tensor:
        if skip is None:
            raise UsageError("DecoderStage needs a skip feature")
        up = ops.resample(self.up(deep), "pixel_shuffle_up2")
        if up.shape != skip.shape:
            raise ShapeError(f"DecoderStage: upsampled feature {up.shape} does not match skip {skip.shape}")
        x = self.fuse(ops.concat([up, skip], axis=1))
        for layer in self.ctl:
            x = layer(x)
        return x

    def macs(self, deep_shape: Shape) -> int:
        B, _, h, w = deep_shape
        shape = (B, self.channels, 2 * h, 2 * w)
        total = self.up.macs(deep_shape) + self.fuse.macs((B, 2 * self.channels, 2 * h, 2 * w))
        return total + sum(layer.macs(shape) for layer in self.ctl)


def stage_forward(
    x: Tensor, stage: Union[EncoderStage, DecoderStage], skip: Optional[Tensor] = None
) -> Union[tuple[Tensor, Optional[Tensor]], Tensor]:
    if isinstance(stage, DecoderStage):
        return stage(x, skip)
    return stage(x)

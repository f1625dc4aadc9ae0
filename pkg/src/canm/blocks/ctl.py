"""Compound transformer layer: window + channel attention side by side,
channel reduction, gated feed-forward, one residual."""

from __future__ import annotations

from typing import Optional

from canm.blocks.channel import ChannelAttentionBlock, FullScaleChannelAttention
from canm.blocks.layers import ChannelLayerNorm, Conv2d, Shape, conv1x1, conv3x3
from canm.blocks.window import WindowAttentionBlock
from canm.errors import ConfigurationError
from canm.tensor import ops
from canm.tensor.module import Module
from canm.tensor.tensor import Tensor


class FeedForwardBlock(Module):
    """norm -> 1x1 to 2rC -> halves a * gelu(b) -> depthwise 3x3 -> 1x1 to C."""

    def __init__(self, channels: int, ratio: int = 2):
        super().__init__()
        hidden = ratio * channels
        self.hidden = hidden
        self.norm = ChannelLayerNorm(channels)
        self.expand = conv1x1(channels, 2 * hidden)
        self.dwconv = Conv2d(hidden, hidden, 3, padding=1, groups=hidden)
        self.project = conv1x1(hidden, channels)

    def forward(self, x: Tensor) -> Tensor:
        value, gate = ops.split(self.expand(self.norm(x)), 2, axis=1)
        return self.project(self.dwconv(value * ops.gelu(gate)))

    def macs(self, shape: Shape) -> int:
        B, C, H, W = shape
        hidden_shape = (B, self.hidden, H, W)
        return self.expand.macs(shape) + self.dwconv.macs(hidden_shape) + self.project.macs(hidden_shape)


class ConvBlock(Module):
    """3x3 conv -> gelu -> 3x3 conv; stands in for the attention pair."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = conv3x3(channels, channels)
        self.conv2 = conv3x3(channels, channels)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv2(ops.gelu(self.conv1(x)))

    def macs(self, shape: Shape) -> int:
        return self.conv1.macs(shape) + self.conv2.macs(shape)


class CompoundTransformerLayer(Module):
    """x + FFB(dr(concat(WAB(n(x)), CAB(n(x)))))

    ``channel_attention`` is "pyramid", "full" or None; with ``cnn_only`` the
    attention pair is replaced by a ConvBlock.
    """

    def __init__(
        self,
        channels: int,
        wa_heads: int,
        ca_heads: int,
        window: int,
        shift: bool = False,
        use_wab: bool = True,
        channel_attention: Optional[str] = "pyramid",
        cnn_only: bool = False,
        ffn_ratio: int = 2,
    ):
        super().__init__()
        self.norm = ChannelLayerNorm(channels)
        self.cnn_only = cnn_only
        self.wab: Optional[WindowAttentionBlock] = None
        self.cab: Optional[Module] = None
        self.conv: Optional[ConvBlock] = None
        branches = 0
        if cnn_only:
            self.conv = ConvBlock(channels)
            branches = 1
        else:
            if use_wab:
                self.wab = WindowAttentionBlock(channels, wa_heads, window, shift)
                branches += 1
            if channel_attention == "pyramid":
                self.cab = ChannelAttentionBlock(channels, ca_heads)
                branches += 1
            elif channel_attention == "full":
                self.cab = FullScaleChannelAttention(channels, ca_heads)
                branches += 1
            elif channel_attention is not None:
                raise ConfigurationError(f"Unknown channel attention '{channel_attention}'")
        if branches == 0:
            raise ConfigurationError("A CTL needs at least one of window attention, channel attention or the conv block")
        self.dr = conv1x1(branches * channels, channels)
        self.ffb = FeedForwardBlock(channels, ffn_ratio)

    def branches(self, x: Tensor) -> list[Tensor]:
        n = self.norm(x)
        if self.conv is not None:
            return [self.conv(n)]
        outs = []
        if self.wab is not None:
            outs.append(self.wab(n))
        if self.cab is not None:
            outs.append(self.cab(n))
        return outs

    def forward(self, x: Tensor) -> Tensor:
        outs = self.branches(x)
        mixed = outs[0] if len(outs) == 1 else ops.concat(outs, axis=1)
        return x + self.ffb(self.dr(mixed))

    def macs(self, shape: Shape) -> int:
        B, C, H, W = shape
        total = self.ffb.macs(shape)
        total += self.dr.macs((B, self.dr.in_channels, H, W))
        for block in (self.wab, self.cab, self.conv):
            if block is not None:
                total += block.macs(shape)
        return total


def ctl_forward(x: Tensor, layer: CompoundTransformerLayer) -> Tensor:
    return layer(x)

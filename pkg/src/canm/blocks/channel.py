"""Channel self-attention: channels are tokens and each head builds a
(C/h) x (C/h) affinity matrix."""

from __future__ import annotations

import math

from canm.blocks.layers import Shape, conv1x1
from canm.errors import ShapeError
from canm.tensor import ops
from canm.tensor.module import Module, Parameter
from canm.tensor.tensor import Tensor


def _heads(t: Tensor, heads: int) -> Tensor:
    """[B, C, H, W] -> [B, h, C/h, H*W]; heads take contiguous channel groups."""
    B, C, H, W = t.shape
    return t.reshape(B, heads, C // heads, H * W)


def _affinity(q: Tensor, k: Tensor) -> Tensor:
    return q @ k.transpose(0, 1, 3, 2)


class ChannelAttentionBlock(Module):
    """Pyramid channel attention: Q and K come from the map pooled by 2 and by 4,
    V stays at full scale, the two affinities are mixed by learnable scalars."""

    def __init__(self, channels: int, heads: int):
        super().__init__()
        if channels % heads:
            raise ShapeError(f"ChannelAttentionBlock: {channels} channels not divisible by {heads} heads")
        self.channels = channels
        self.heads = heads
        self.v = conv1x1(channels, channels)
        self.q_half = conv1x1(channels, channels)
        self.k_half = conv1x1(channels, channels)
        self.q_quarter = conv1x1(channels, channels)
        self.k_quarter = conv1x1(channels, channels)
        self.alpha1 = Parameter((1,), init="ones")
        self.alpha2 = Parameter((1,), init="ones")
        self.proj = conv1x1(channels, channels)

    def attention(self, x: Tensor) -> Tensor:
        """Row-stochastic [B, h, C/h, C/h] attention matrix."""
        _, C, H, W = x.shape
        if H % 4 or W % 4:
            raise ShapeError(f"ChannelAttentionBlock: map {(H, W)} must be divisible by 4")
        half = ops.resample(x, "avgpool_down2")
        quarter = ops.resample(x, "avgpool_down4")
        attn_half = _affinity(_heads(self.q_half(half), self.heads), _heads(self.k_half(half), self.heads))
        attn_quarter = _affinity(
            _heads(self.q_quarter(quarter), self.heads), _heads(self.k_quarter(quarter), self.heads)
        )
        mixed = self.alpha1 * attn_half + self.alpha2 * attn_quarter
        return ops.softmax(ops.scale(mixed, 1.0 / math.sqrt(C // self.heads)), axis=-1)

    def forward(self, x: Tensor) -> Tensor:
        B, C, H, W = x.shape
        attn = self.attention(x)
        out = attn @ _heads(self.v(x), self.heads)
        return self.proj(out.reshape(B, C, H, W))

    def macs(self, shape: Shape) -> int:
        B, C, H, W = shape
        d = C // self.heads
        half = (B, C, H // 2, W // 2)
        quarter = (B, C, H // 4, W // 4)
        convs = (
            self.v.macs(shape)
            + self.proj.macs(shape)
            + self.q_half.macs(half)
            + self.k_half.macs(half)
            + self.q_quarter.macs(quarter)
            + self.k_quarter.macs(quarter)
        )
        products = B * self.heads * d * d * (H * W // 4 + H * W // 16 + H * W)
        return convs + products


class FullScaleChannelAttention(Module):
    """Single-scale channel attention with L2-normalised Q/K and a learnable
    per-head temperature."""

    eps = 1e-8

    def __init__(self, channels: int, heads: int):
        super().__init__()
        if channels % heads:
            raise ShapeError(f"FullScaleChannelAttention: {channels} channels not divisible by {heads} heads")
        self.channels = channels
        self.heads = heads
        self.q = conv1x1(channels, channels)
        self.k = conv1x1(channels, channels)
        self.v = conv1x1(channels, channels)
        self.temperature = Parameter((heads, 1, 1), init="ones")
        self.proj = conv1x1(channels, channels)

    def _normalize(self, t: Tensor) -> Tensor:
        return t / ops.sqrt_floor(ops.sum(t * t, axis=-1, keepdims=True), self.eps)

    def attention(self, x: Tensor) -> Tensor:
        q = self._normalize(_heads(self.q(x), self.heads))
        k = self._normalize(_heads(self.k(x), self.heads))
        return ops.softmax(_affinity(q, k) * self.temperature, axis=-1)

    def forward(self, x: Tensor) -> Tensor:
        B, C, H, W = x.shape
        out = self.attention(x) @ _heads(self.v(x), self.heads)
        return self.proj(out.reshape(B, C, H, W))

    def macs(self, shape: Shape) -> int:
        B, C, H, W = shape
        d = C // self.heads
        convs = sum(conv.macs(shape) for conv in (self.q, self.k, self.v, self.proj))
        return convs + 2 * B * self.heads * d * d * H * W


def cab_forward(x: Tensor, block: Module) -> Tensor:
    return block(x)

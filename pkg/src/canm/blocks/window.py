"""Window self-attention: pixels are tokens, attention stays inside each
w x w window, alternate layers roll the map by half a window first."""

from __future__ import annotations

import logging
import math

from canm.blocks.layers import Shape, conv1x1
from canm.errors import ShapeError
from canm.tensor import ops
from canm.tensor.module import Module
from canm.tensor.tensor import Tensor

logger = logging.getLogger(__name__)


def effective_window(window: int, height: int, width: int) -> int:
    return min(window, height, width)


def shift_active(window: int, height: int, width: int, shift: bool) -> bool:
    """No shift when one window already covers the whole map."""
    ws = effective_window(window, height, width)
    return shift and not (ws >= height and ws >= width)


def window_partition(x: Tensor, window: int, shift: bool = False) -> Tensor:
    """[B, C, H, W] -> [B * nW, C, w, w], windows in row-major order per sample."""
    B, C, H, W = x.shape
    if H % window or W % window:
        raise ShapeError(f"window_partition: map {(H, W)} is not divisible by window {window}")
    if shift:
        x = ops.roll(x, (-(window // 2), -(window // 2)), (2, 3))
    nh, nw = H // window, W // window
    x = x.reshape(B, C, nh, window, nw, window).transpose(0, 2, 4, 1, 3, 5)
    return x.reshape(B * nh * nw, C, window, window)


def window_reverse(windows: Tensor, window: int, height: int, width: int, shift: bool = False) -> Tensor:
    """Exact inverse of ``window_partition`` with the same flags."""
    nh, nw = height // window, width // window
    C = windows.shape[1]
    B = windows.shape[0] // (nh * nw)
    x = windows.reshape(B, nh, nw, C, window, window).transpose(0, 3, 1, 4, 2, 5)
    x = x.reshape(B, C, height, width)
    if shift:
        x = ops.roll(x, (window // 2, window // 2), (2, 3))
    return x


class WindowAttentionBlock(Module):
    def __init__(self, channels: int, heads: int, window: int, shift: bool = False):
        super().__init__()
        if channels % heads:
            raise ShapeError(f"WindowAttentionBlock: {channels} channels not divisible by {heads} heads")
        self.channels = channels
        self.heads = heads
        self.window = window
        self.shift = shift
        self.q = conv1x1(channels, channels)
        self.k = conv1x1(channels, channels)
        self.v = conv1x1(channels, channels)
        self.proj = conv1x1(channels, channels)

    def _split_heads(self, t: Tensor, ws: int) -> Tensor:
        # [N, C, w, w] -> [N, h, T, d]
        N = t.shape[0]
        d = self.channels // self.heads
        return t.reshape(N, self.heads, d, ws * ws).transpose(0, 1, 3, 2)

    def forward(self, x: Tensor) -> Tensor:
        B, C, H, W = x.shape
        ws = effective_window(self.window, H, W)
        if ws < self.window:
            logger.warning(f"window clamped from {self.window} to {ws} on a {H}x{W} map")
        shift = shift_active(self.window, H, W, self.shift)
        q = self._split_heads(window_partition(self.q(x), ws, shift), ws)
        k = self._split_heads(window_partition(self.k(x), ws, shift), ws)
        v = self._split_heads(window_partition(self.v(x), ws, shift), ws)
        d = C // self.heads
        attn = ops.softmax(ops.scale(q @ k.transpose(0, 1, 3, 2), 1.0 / math.sqrt(d)), axis=-1)
        out = (attn @ v).transpose(0, 1, 3, 2).reshape(-1, C, ws, ws)
        return self.proj(window_reverse(out, ws, H, W, shift))

    def macs(self, shape: Shape) -> int:
        B, C, H, W = shape
        ws = effective_window(self.window, H, W)
        windows = B * (H // ws) * (W // ws)
        tokens = ws * ws
        d = C // self.heads
        attention = 2 * windows * self.heads * tokens * tokens * d
        return sum(conv.macs(shape) for conv in (self.q, self.k, self.v, self.proj)) + attention


def wab_forward(x: Tensor, block: WindowAttentionBlock) -> Tensor:
    return block(x)

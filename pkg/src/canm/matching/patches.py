"""Dense stride-1 patch unfold/fold.

Patch i is centred on pixel i (zero padding of (p-1)/2), so a map of H x W
yields an H x W patch grid. Patch vectors are channel-major: index
c * ph * pw + a * pw + b holds channel c at offset (a, b).
"""

from __future__ import annotations

import numpy as np

from canm.errors import ShapeError
from canm.tensor import ops
from canm.tensor.tensor import Tensor

Grid = tuple[int, int]


def _check_patch(ph: int, pw: int) -> None:
    if ph % 2 == 0 or pw % 2 == 0:
        raise ShapeError(f"patch size must be odd, got {(ph, pw)}")


def unfold_patches(x: Tensor, ph: int, pw: int) -> tuple[Tensor, Grid]:
    """[B, C, H, W] -> ([B, H*W, C*ph*pw], (H, W))."""
    _check_patch(ph, pw)
    B, C, H, W = x.shape
    rh, rw = ph // 2, pw // 2
    padded = ops.pad(x, ((0, 0), (0, 0), (rh, rh), (rw, rw)))
    taps = [padded[:, :, a : a + H, b : b + W] for a in range(ph) for b in range(pw)]
    stacked = ops.stack(taps, axis=2)  # [B, C, T, H, W]
    patches = stacked.transpose(0, 3, 4, 1, 2).reshape(B, H * W, C * ph * pw)
    return patches, (H, W)


def coverage(grid: Grid, ph: int, pw: int) -> np.ndarray:
    """Number of in-grid patches covering each pixel."""
    H, W = grid
    rh, rw = ph // 2, pw // 2
    rows = np.array([min(i + rh, H - 1) - max(i - rh, 0) + 1 for i in range(H)], dtype=float)
    cols = np.array([min(j + rw, W - 1) - max(j - rw, 0) + 1 for j in range(W)], dtype=float)
    return np.outer(rows, cols)


def fold_patches(patches: Tensor, grid: Grid, channels: int, ph: int, pw: int) -> Tensor:
    """Average every patch entry back onto the pixel it was taken from."""
    _check_patch(ph, pw)
    H, W = grid
    B, M, L = patches.shape
    if M != H * W or L != channels * ph * pw:
        raise ShapeError(f"fold_patches: patches {patches.shape} do not fit grid {grid} with {channels}x{ph}x{pw}")
    rh, rw = ph // 2, pw // 2
    taps = patches.reshape(B, H, W, channels, ph * pw).transpose(0, 3, 4, 1, 2)  # [B, C, T, H, W]
    canvas = None
    for t in range(ph * pw):
        a, b = divmod(t, pw)
        placed = ops.pad(taps[:, :, t], ((0, 0), (0, 0), (a, 2 * rh - a), (b, 2 * rw - b)))
        canvas = placed if canvas is None else canvas + placed
    interior = canvas[:, :, rh : rh + H, rw : rw + W]
    return interior / coverage(grid, ph, pw).astype(patches.dtype)

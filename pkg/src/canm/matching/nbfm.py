"""Neighbourhood-based feature matching and its global counterpart.

Each degraded-feature patch is compared (cosine similarity) with the
reference patches around the same grid position; the similarities are gated
by a learnable weight shared over all queries, soft-maxed over the valid
neighbours and used to blend the reference patches.
"""

from __future__ import annotations

import contextvars
import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from canm.blocks.layers import Shape, conv1x1
from canm.errors import ConfigurationError, ShapeError
from canm.matching.adain import AdaIN
from canm.matching.patches import Grid, fold_patches, unfold_patches
from canm.tensor import ops
from canm.tensor.module import Module, Parameter
from canm.tensor.tensor import Tensor

logger = logging.getLogger(__name__)

EPS = 1e-8


class SimilarityCounter:
    """Running total of patch-pair cosine similarities computed by matching."""

    def __init__(self) -> None:
        self.total = 0


_similarity_counter: contextvars.ContextVar[Optional[SimilarityCounter]] = contextvars.ContextVar(
    "canm_similarity_counter", default=None
)


@contextmanager
def count_similarities() -> Iterator[SimilarityCounter]:
    counter = SimilarityCounter()
    token = _similarity_counter.set(counter)
    try:
        yield counter
    finally:
        _similarity_counter.reset(token)


@dataclass
class MatchResult:
    similarity: Tensor  # [B, M, J]
    attention: Tensor  # [B, M, J]
    matched_patches: Tensor  # [B, M, L]
    valid: np.ndarray  # [M, J] bool
    grid: Grid
    offsets: tuple[int, int]  # candidate window (rows, cols) per query
    evaluations: int  # similarity computations per sample

    def matched_map(self, channels: int, ph: int, pw: int) -> Tensor:
        return fold_patches(self.matched_patches, self.grid, channels, ph, pw)

    def argmax_offsets(self) -> np.ndarray:
        """[B, Hg, Wg] index of the strongest candidate per query."""
        B = self.attention.shape[0]
        H, W = self.grid
        return np.argmax(self.attention.data, axis=-1).reshape(B, H, W)


def neighborhood_mask(grid: Grid, nh: int, nw: int) -> np.ndarray:
    """[M, nh*nw] True where the neighbour lies inside the grid."""
    H, W = grid
    rows = np.arange(H)[:, None] + np.arange(nh)[None, :] - nh // 2  # [H, nh]
    cols = np.arange(W)[:, None] + np.arange(nw)[None, :] - nw // 2  # [W, nw]
    row_ok = (rows >= 0) & (rows < H)
    col_ok = (cols >= 0) & (cols < W)
    mask = row_ok[:, None, :, None] & col_ok[None, :, None, :]  # [H, W, nh, nw]
    return mask.reshape(H * W, nh * nw)


def gather_neighbors(p_ref: Tensor, grid: Grid, nh: int, nw: int) -> Tensor:
    """[B, M, L] -> [B, M, nh*nw, L]; out-of-grid neighbours are zero vectors."""
    B, M, L = p_ref.shape
    H, W = grid
    rh, rw = nh // 2, nw // 2
    padded = ops.pad(p_ref.reshape(B, H, W, L), ((0, 0), (rh, rh), (rw, rw), (0, 0)))
    taps = [padded[:, a : a + H, b : b + W, :] for a in range(nh) for b in range(nw)]
    return ops.stack(taps, axis=3).reshape(B, M, nh * nw, L)


def _norm(t: Tensor) -> Tensor:
    return ops.sqrt_floor(ops.sum(t * t, axis=-1), EPS)


def cosine_similarity(query: Tensor, candidates: Tensor) -> tuple[Tensor, int]:
    """Similarity of each query [B, M, L] with its candidates [B, M, J, L]
    (or [B, J, L] shared by every query) -> ([B, M, J], pairs per sample)."""
    B, M, L = query.shape
    if candidates.ndim == 4:
        J = candidates.shape[2]
        dots = (query.reshape(B, M, 1, L) @ candidates.transpose(0, 1, 3, 2)).reshape(B, M, J)
        norms = _norm(candidates)
    else:
        J = candidates.shape[1]
        dots = query @ candidates.transpose(0, 2, 1)
        norms = _norm(candidates).reshape(B, 1, J)
    similarity = dots / (_norm(query).reshape(B, M, 1) * norms)
    counter = _similarity_counter.get()
    if counter is not None:
        counter.total += dots.size
    return similarity, dots.size // B


def _gate(similarity: Tensor, weight: Tensor) -> Tensor:
    return similarity * weight


def _check_patches(p_deg: Tensor, p_ref: Tensor, grid: Grid) -> None:
    if p_deg.shape != p_ref.shape:
        raise ShapeError(f"matching: query patches {p_deg.shape} and reference patches {p_ref.shape} differ")
    if p_deg.shape[1] != grid[0] * grid[1]:
        raise ShapeError(f"matching: {p_deg.shape[1]} patches do not fill grid {grid}")


def nbfm_match(p_deg: Tensor, p_ref: Tensor, grid: Grid, weight: Tensor, neighborhood: tuple[int, int]) -> MatchResult:
    _check_patches(p_deg, p_ref, grid)
    nh, nw = neighborhood
    if nh % 2 == 0 or nw % 2 == 0:
        raise ShapeError(f"neighbourhood must be odd, got {neighborhood}")
    if weight.shape != (nh * nw,):
        raise ShapeError(f"nbfm weight has shape {weight.shape}, expected {(nh * nw,)}")
    B, M, L = p_deg.shape
    valid = neighborhood_mask(grid, nh, nw)
    neighbors = gather_neighbors(p_ref, grid, nh, nw)  # [B, M, J, L]
    similarity, evaluations = cosine_similarity(p_deg, neighbors)
    attention = ops.softmax(_gate(similarity, weight), axis=-1, mask=valid[None])
    matched = (attention.reshape(B, M, 1, nh * nw) @ neighbors).reshape(B, M, L)
    return MatchResult(similarity, attention, matched, valid, grid, (nh, nw), evaluations)


def relative_offsets(grid: Grid) -> np.ndarray:
    """[M, M] flat index into a (2H-1) x (2W-1) offset table for every
    (query, candidate) pair, ordered like a full-grid neighbourhood."""
    H, W = grid
    r = np.arange(H).repeat(W)
    c = np.tile(np.arange(W), H)
    dr = r[None, :] - r[:, None] + H - 1
    dc = c[None, :] - c[:, None] + W - 1
    return dr * (2 * W - 1) + dc


def global_match(p_deg: Tensor, p_ref: Tensor, grid: Grid, weight: Tensor) -> MatchResult:
    _check_patches(p_deg, p_ref, grid)
    H, W = grid
    if weight.shape != ((2 * H - 1) * (2 * W - 1),):
        raise ShapeError(f"gfm weight has shape {weight.shape}, expected {((2 * H - 1) * (2 * W - 1),)}")
    B, M, L = p_deg.shape
    similarity, evaluations = cosine_similarity(p_deg, p_ref)  # [B, M, M]
    attention = ops.softmax(_gate(similarity, ops.take(weight, relative_offsets(grid))), axis=-1)
    matched = attention @ p_ref
    valid = np.ones((M, M), dtype=bool)
    return MatchResult(similarity, attention, matched, valid, grid, (2 * H - 1, 2 * W - 1), evaluations)


def nbfm_fuse(matched: Tensor, x_deg: Tensor, fusion: Module) -> Tensor:
    if matched.shape != x_deg.shape:
        raise ShapeError(f"nbfm_fuse: matched {matched.shape} and degraded {x_deg.shape} differ")
    return fusion(ops.concat([matched, x_deg], axis=1))


class MatchingUnit(Module):
    """AdaIN alignment, patch matching (neighbourhood or global) and 1x1 fusion."""

    def __init__(self, channels: int, patch: tuple[int, int], neighborhood: tuple[int, int], grid: Grid, mode: str = "nbfm"):
        super().__init__()
        self.channels = channels
        self.patch = patch
        self.neighborhood = neighborhood
        self.grid = grid
        self.mode = mode
        self.adain = AdaIN(channels)
        if mode == "nbfm":
            self.nbfm = NeighborhoodWeight(neighborhood)
        elif mode == "gfm":
            self.gfm = NeighborhoodWeight((2 * grid[0] - 1, 2 * grid[1] - 1))
        else:
            raise ConfigurationError(f"MatchingUnit mode must be 'nbfm' or 'gfm', got '{mode}'")
        self.fuse = conv1x1(2 * channels, channels)

    def match(self, x_ref: Tensor, x_deg: Tensor) -> MatchResult:
        ph, pw = self.patch
        p_ref, grid = unfold_patches(self.adain(x_ref, x_deg), ph, pw)
        p_deg, _ = unfold_patches(x_deg, ph, pw)
        if self.mode == "nbfm":
            return nbfm_match(p_deg, p_ref, grid, self.nbfm.weight, self.neighborhood)
        return global_match(p_deg, p_ref, grid, self.gfm.weight)

    def forward(self, x_ref: Tensor, x_deg: Tensor, capture: Optional[list] = None) -> Tensor:
        result = self.match(x_ref, x_deg)
        if capture is not None:
            capture.append(result)
        matched = result.matched_map(self.channels, *self.patch)
        return nbfm_fuse(matched, x_deg, self.fuse)

    def macs(self, shape: Shape) -> int:
        B, C, H, W = shape
        M = H * W
        L = C * self.patch[0] * self.patch[1]
        candidates = M if self.mode == "gfm" else self.neighborhood[0] * self.neighborhood[1]
        products = 2 * B * M * L * candidates
        return self.adain.macs(shape) + products + self.fuse.macs((B, 2 * C, H, W))


class NeighborhoodWeight(Module):
    """Learnable per-offset gate, shared by every query position."""

    def __init__(self, window: tuple[int, int]):
        super().__init__()
        self.weight = Parameter((window[0] * window[1],), init="ones")


class ConcatFusion(Module):
    """Matching-free skip: 1x1 conv over concat(reference, degraded)."""

    def __init__(self, channels: int):
        super().__init__()
        self.fuse = conv1x1(2 * channels, channels)

    def forward(self, x_ref: Tensor, x_deg: Tensor, capture: Optional[list] = None) -> Tensor:
        return self.fuse(ops.concat([x_ref, x_deg], axis=1))

    def macs(self, shape: Shape) -> int:
        B, C, H, W = shape
        return self.fuse.macs((B, 2 * C, H, W))

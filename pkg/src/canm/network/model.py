"""Two-branch encoder, cross-branch matching, U-shaped decoder.

Inputs are the full-resolution reference and the zero-filled LR image. Each
branch downsamples 2x in a strided head and runs four encoder stages; levels
1-3 are fused by matching units, level 4 by concat + 1x1. Three decoder stages
climb back to level 1 and the output head returns to full resolution.
"""

from __future__ import annotations

import logging
from typing import Optional

from canm.blocks.layers import Conv2d, Shape, conv1x1, conv3x3
from canm.blocks.stages import DecoderStage, EncoderStage
from canm.errors import ShapeError
from canm.matching.nbfm import ConcatFusion, MatchingUnit, MatchResult
from canm.network.configuration import FieldRecorder, NetworkConfig
from canm.tensor import ops
from canm.tensor.module import Module, initialize
from canm.tensor.tensor import Tensor

logger = logging.getLogger(__name__)


class EncoderBranch(Module):
    def __init__(self, channels: list[int], depths: list[int], level_kwargs: list[dict]):
        super().__init__()
        self.head = Conv2d(1, channels[0], 3, stride=2, padding=1)
        for k in range(4):
            next_channels = channels[k + 1] if k < 3 else None
            setattr(self, f"stage{k + 1}", EncoderStage(channels[k], depths[k], next_channels, **level_kwargs[k]))

    def stages(self) -> list[EncoderStage]:
        return [getattr(self, f"stage{k}") for k in range(1, 5)]

    def forward(self, x: Tensor) -> list[Tensor]:
        features = []
        x = self.head(x)
        for stage in self.stages():
            feature, x = stage(x)
            features.append(feature)
        return features

    def macs(self, shape: Shape) -> int:
        total = self.head.macs(shape)
        level = self.head.output_shape(shape)
        for stage in self.stages():
            total += stage.macs(level)
            if stage.down is not None:
                level = stage.down.output_shape(level)
        return total


class Decoder(Module):
    def __init__(self, channels: list[int], depths: list[int], level_kwargs: list[dict]):
        super().__init__()
        for k in (3, 2, 1):
            setattr(
                self,
                f"stage{k}",
                DecoderStage(channels[k - 1], channels[k], depths[k - 1], **level_kwargs[k - 1]),
            )

    def stages(self) -> list[DecoderStage]:
        return [self.stage3, self.stage2, self.stage1]

    def forward(self, deep: Tensor, skips: list[Tensor]) -> Tensor:
        x = deep
        for stage, skip in zip(self.stages(), reversed(skips)):
            x = stage(x, skip)
        return x

    def macs(self, deep_shape: Shape) -> int:
        total = 0
        B, _, h, w = deep_shape
        for stage in self.stages():
            shape = (B, stage.deep_channels, h, w)
            total += stage.macs(shape)
            h, w = 2 * h, 2 * w
        return total


class OutputHead(Module):
    """1x1 to 4C, pixel shuffle 2x, 3x3 to one channel (zero-initialised)."""

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.expand = conv1x1(channels, 4 * channels)
        self.project = conv3x3(channels, 1, weight_init="zeros")

    def forward(self, x: Tensor) -> Tensor:
        return self.project(ops.resample(self.expand(x), "pixel_shuffle_up2"))

    def macs(self, shape: Shape) -> int:
        B, C, H, W = shape
        return self.expand.macs(shape) + self.project.macs((B, C, 2 * H, 2 * W))


class Network(Module):
    def __init__(self, config: NetworkConfig):
        super().__init__()
        cfg = FieldRecorder(config)
        self.config = config
        self.input_size = tuple(cfg.input_size)
        self.variant = cfg.variant
        self.global_residual = cfg.global_residual
        self.patch = tuple(cfg.patch_size)
        channels = list(cfg.channels)
        channel_attention = ("pyramid" if cfg.use_pyramid else "full") if cfg.use_cab else None
        level_kwargs = [
            dict(
                wa_heads=cfg.wa_heads[k],
                ca_heads=cfg.ca_heads[k],
                window=cfg.window_size,
                use_wab=cfg.use_wab,
                channel_attention=channel_attention,
                cnn_only=cfg.cnn_only,
                ffn_ratio=cfg.ffn_ratio,
            )
            for k in range(4)
        ]
        self.ref = EncoderBranch(channels, cfg.cte_depths, level_kwargs)
        self.deg = EncoderBranch(channels, cfg.cte_depths, level_kwargs)
        self.matching = cfg.matching
        sizes = config.level_sizes()
        for k in range(3):
            if self.matching == "none":
                unit: Module = ConcatFusion(channels[k])
            else:
                unit = MatchingUnit(channels[k], self.patch, tuple(cfg.neighborhoods[k]), sizes[k], self.matching)
            setattr(self, f"match{k + 1}", unit)
        self.bottleneck = conv1x1(2 * channels[3], channels[3])
        self.dec = Decoder(channels, cfg.ctd_depths, level_kwargs)
        self.head = OutputHead(channels[0])
        self.consumed_fields = frozenset(cfg.accessed)

    def matching_units(self) -> list[Module]:
        return [self.match1, self.match2, self.match3]

    def forward(self, ref: Tensor, lr_interp: Tensor, matches: Optional[dict[int, MatchResult]] = None) -> Tensor:
        H, W = self.input_size
        for name, t in (("ref", ref), ("lr_interp", lr_interp)):
            if t.ndim != 4 or t.shape[1] != 1 or t.shape[2:] != (H, W):
                raise ShapeError(f"forward: {name} has shape {t.shape}, expected (B, 1, {H}, {W})")
        if ref.shape != lr_interp.shape:
            raise ShapeError(f"forward: ref {ref.shape} and lr_interp {lr_interp.shape} differ")
        f_ref = self.ref(ref)
        f_deg = self.deg(lr_interp)
        skips = []
        for level, unit in enumerate(self.matching_units(), start=1):
            captured: Optional[list] = [] if matches is not None else None
            skips.append(unit(f_ref[level - 1], f_deg[level - 1], captured))
            if captured:
                matches[level] = captured[0]
        deep = self.bottleneck(ops.concat([f_ref[3], f_deg[3]], axis=1))
        out = self.head(self.dec(deep, skips))
        return out + lr_interp if self.global_residual else out

    def macs(self, shape: Optional[Shape] = None) -> int:
        H, W = self.input_size
        shape = shape or (1, 1, H, W)
        B = shape[0]
        channels = self.config.channels
        total = self.ref.macs(shape) + self.deg.macs(shape)
        for (h, w), c, unit in zip(self.config.level_sizes(), channels, self.matching_units()):
            total += unit.macs((B, c, h, w))
        h4, w4 = self.config.level_sizes()[3]
        total += self.bottleneck.macs((B, 2 * channels[3], h4, w4))
        total += self.dec.macs((B, channels[3], h4, w4))
        h1, w1 = self.config.level_sizes()[0]
        return total + self.head.macs((B, channels[0], h1, w1))


def build(config: NetworkConfig, seed: int = 0) -> Network:
    config.validate_invariants()
    net = Network(config)
    initialize(net, seed)
    logger.info(f"built variant '{config.variant}' with {net.num_parameters()} parameters (seed {seed})")
    return net


def build_variant(config: NetworkConfig, variant: str, seed: int = 0) -> Network:
    return build(config.with_variant(variant), seed)


def count_params_flops(net: Network) -> tuple[int, int]:
    """(parameter count, multiply-accumulates of one batch-1 forward)."""
    return net.num_parameters(), net.macs()

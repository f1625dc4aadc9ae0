from __future__ import annotations

import hashlib
import os
from typing import Any, Literal, Optional

from pydantic import BaseModel, Field

from canm.errors import ConfigurationError, UsageError

VARIANTS = ("default", "wo_ca", "wo_wa", "wo_ps", "cnn_only", "wo_fm", "gfm")

# Base Adam lr of the single-pair overfit harness; the multi-pair recipe keeps 1e-4.
OVERFIT_LEARNING_RATE = 3e-3


class NetworkConfig(BaseModel):
    """Hyperparameters that fully determine the network graph."""

    input_size: tuple[int, int] = Field(
        default=(256, 256),
        metadata={"description": "Height and width of the reference and LR inputs."},
    )
    channels: list[int] = Field(
        default=[64, 128, 256, 256],
        metadata={"description": "Feature channels at encoder levels 1-4."},
    )
    cte_depths: list[int] = Field(
        default=[4, 4, 16, 4],
        metadata={"description": "Number of CTLs in each encoder stage."},
    )
    ctd_depths: list[int] = Field(
        default=[4, 4, 4],
        metadata={"description": "Number of CTLs in the decoder stages at levels 1-3."},
    )
    wa_heads: list[int] = Field(
        default=[2, 4, 8, 8],
        metadata={"description": "Window-attention heads per level."},
    )
    ca_heads: list[int] = Field(
        default=[1, 2, 4, 8],
        metadata={"description": "Channel-attention heads per level."},
    )
    neighborhoods: list[tuple[int, int]] = Field(
        default=[(3, 3), (3, 3), (5, 5)],
        metadata={"description": "Matching neighbourhood (rows, cols) at levels 1-3."},
    )
    patch_size: tuple[int, int] = Field(
        default=(3, 3),
        metadata={"description": "Patch size used by feature matching."},
    )
    window_size: int = Field(
        default=8,
        metadata={"description": "Window edge in pixels; clamped to the map on small levels."},
    )
    ffn_ratio: int = Field(
        default=2,
        metadata={"description": "Feed-forward expansion ratio r (hidden width 2rC before gating)."},
    )
    use_wab: bool = Field(default=True, metadata={"description": "Window attention in every CTL."})
    use_cab: bool = Field(default=True, metadata={"description": "Channel attention in every CTL."})
    use_pyramid: bool = Field(
        default=True,
        metadata={"description": "Pyramid (1/2 and 1/4 scale) Q/K in channel attention; full-scale otherwise."},
    )
    cnn_only: bool = Field(
        default=False,
        metadata={"description": "Replace each CTL's attention pair by a 3x3 conv block."},
    )
    matching: Literal["nbfm", "gfm", "none"] = Field(
        default="nbfm",
        metadata={"description": "Cross-branch fusion at levels 1-3."},
    )
    global_residual: bool = Field(
        default=True,
        metadata={"description": "Add the LR input to the network output."},
    )
    variant: str = Field(
        default="default",
        metadata={"description": "Name of the ablation this config was derived as."},
    )

    def level_sizes(self) -> list[tuple[int, int]]:
        H, W = self.input_size
        return [(H >> k, W >> k) for k in range(1, 5)]

    def validate_invariants(self) -> "NetworkConfig":
        def fail(message: str) -> None:
            raise ConfigurationError(f"Invalid NetworkConfig: {message}")

        for name, expected in (("channels", 4), ("cte_depths", 4), ("wa_heads", 4), ("ca_heads", 4),
                               ("ctd_depths", 3), ("neighborhoods", 3)):
            if len(getattr(self, name)) != expected:
                fail(f"{name} must have {expected} entries, got {len(getattr(self, name))}")
        H, W = self.input_size
        if H <= 0 or W <= 0 or H % 16 or W % 16:
            fail(f"input_size {self.input_size} must be positive and divisible by 16")
        if any(c <= 0 for c in self.channels):
            fail(f"channels {self.channels} must be positive")
        for name in ("cte_depths", "ctd_depths"):
            depths = getattr(self, name)
            if any(d <= 0 or d % 2 for d in depths):
                fail(f"every entry of {name} must be a positive even number, got {depths}")
        if self.window_size <= 0 or self.ffn_ratio <= 0:
            fail("window_size and ffn_ratio must be positive")
        if any(p % 2 == 0 or p <= 0 for p in self.patch_size):
            fail(f"patch_size {self.patch_size} must be odd")
        for nh, nw in self.neighborhoods:
            if nh % 2 == 0 or nw % 2 == 0 or nh <= 0 or nw <= 0:
                fail(f"neighbourhood {(nh, nw)} must be odd")
        if not self.cnn_only and not (self.use_wab or self.use_cab):
            fail("at least one of use_wab and use_cab is required unless cnn_only")
        for level, ((h, w), c) in enumerate(zip(self.level_sizes(), self.channels), start=1):
            if self.cnn_only:
                continue
            if self.use_wab:
                if c % self.wa_heads[level - 1]:
                    fail(f"level {level}: {c} channels not divisible by {self.wa_heads[level - 1]} WA heads")
                ws = min(self.window_size, h, w)
                if h % ws or w % ws:
                    fail(f"level {level}: feature size {(h, w)} not divisible by window {ws}")
            if self.use_cab:
                if c % self.ca_heads[level - 1]:
                    fail(f"level {level}: {c} channels not divisible by {self.ca_heads[level - 1]} CA heads")
                if self.use_pyramid and (h % 4 or w % 4):
                    fail(f"level {level}: feature size {(h, w)} not divisible by 4 for the channel-attention pyramid")
        return self

    def config_hash(self) -> str:
        """Digest of every graph-determining field (``variant`` excluded)."""
        payload = self.model_dump_json(exclude={"variant"})
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def with_variant(self, variant: str) -> "NetworkConfig":
        if variant not in VARIANTS:
            raise UsageError(f"Unknown variant '{variant}'. Available: {list(VARIANTS)}")
        changes: dict[str, Any] = {
            "default": {},
            "wo_ca": {"use_cab": False},
            "wo_wa": {"use_wab": False},
            "wo_ps": {"use_pyramid": False},
            "cnn_only": {"cnn_only": True},
            "wo_fm": {"matching": "none"},
            "gfm": {"matching": "gfm"},
        }[variant]
        return self.model_copy(update={**changes, "variant": variant})

    @classmethod
    def from_preset(cls, name: str = "default") -> "NetworkConfig":
        from canm.utils.preset_loader import get_preset

        return cls(**get_preset(name))


class TrainingConfig(BaseModel):
    """Optimiser and schedule settings."""

    batch_size: int = Field(default=4, metadata={"description": "Images per optimisation step."})
    learning_rate: float = Field(default=1e-4, metadata={"description": "Base Adam learning rate."})
    lr_decay: float = Field(default=0.988, metadata={"description": "Multiplicative lr decay per epoch."})
    max_epochs: int = Field(default=200, metadata={"description": "Maximum number of epochs."})
    beta1: float = Field(default=0.9, metadata={"description": "Adam first-moment decay."})
    beta2: float = Field(default=0.999, metadata={"description": "Adam second-moment decay."})
    eps: float = Field(default=1e-8, metadata={"description": "Adam denominator guard."})
    decay_every_steps: int = Field(
        default=100,
        metadata={"description": "Steps per lr-decay epoch in the single-pair overfit harness."},
    )
    log_every: int = Field(default=10, metadata={"description": "Log training progress every N steps."})

    @classmethod
    def from_env(cls, overrides: Optional[dict[str, Any]] = None) -> "TrainingConfig":
        """Fields may be overridden by CANM_<FIELD> environment variables."""
        overrides = overrides or {}
        raw_values: dict[str, Any] = {
            name: os.environ.get(f"CANM_{name.upper()}", overrides.get(name))
            for name in cls.model_fields.keys()
        }
        values = {k: v for k, v in raw_values.items() if v is not None}
        return cls(**values)

    @classmethod
    def for_overfit(cls, overrides: Optional[dict[str, Any]] = None) -> "TrainingConfig":
        """Settings for fitting one pair: ``OVERFIT_LEARNING_RATE`` unless
        CANM_LEARNING_RATE or ``overrides`` say otherwise."""
        return cls.from_env({"learning_rate": OVERFIT_LEARNING_RATE, **(overrides or {})})


class FieldRecorder:
    """Read-only view of a config that remembers which fields were read."""

    def __init__(self, config: BaseModel):
        object.__setattr__(self, "_config", config)
        object.__setattr__(self, "accessed", set())

    def __getattr__(self, name: str) -> Any:
        config = object.__getattribute__(self, "_config")
        if name in type(config).model_fields:
            self.accessed.add(name)
        return getattr(config, name)

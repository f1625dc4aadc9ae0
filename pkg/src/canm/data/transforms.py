"""Intensity normalisation and rigid misalignment."""

from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import BaseModel, Field
from scipy.ndimage import affine_transform

from canm.data.kspace import ArrayLike, as_image
from canm.errors import UsageError


class NormalizationRecord(BaseModel):
    minimum: float = Field(description="Smallest raw intensity of the image.")
    maximum: float = Field(description="Largest raw intensity of the image.")


def normalize(img: ArrayLike) -> tuple[np.ndarray, NormalizationRecord]:
    """Min-max to [0, 1]; a constant image maps to zeros."""
    image = as_image(img)
    lo, hi = float(image.min()), float(image.max())
    record = NormalizationRecord(minimum=lo, maximum=hi)
    if hi == lo:
        return np.zeros_like(image), record
    return (image - lo) / (hi - lo), record


def denormalize(img: ArrayLike, record: NormalizationRecord) -> np.ndarray:
    return as_image(img) * (record.maximum - record.minimum) + record.minimum


class MisalignSpec(BaseModel):
    tx: float = Field(default=0.0, ge=-4.0, le=4.0, description="Horizontal shift in pixels.")
    ty: float = Field(default=0.0, ge=-4.0, le=4.0, description="Vertical shift in pixels.")
    theta: float = Field(default=0.0, ge=-3.0, le=3.0, description="Rotation in degrees about the image centre.")
    interpolation: Literal["bilinear"] = "bilinear"
    fill: Literal["edge"] = "edge"

    def is_identity(self) -> bool:
        return self.tx == 0 and self.ty == 0 and self.theta == 0

    @classmethod
    def parse(cls, text: str) -> "MisalignSpec":
        """Parse "tx,ty,deg"."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise UsageError(f"misalignment must be 'tx,ty,deg', got '{text}'")
        try:
            tx, ty, theta = (float(p) for p in parts)
        except ValueError:
            raise UsageError(f"misalignment values must be numbers, got '{text}'") from None
        return cls(tx=tx, ty=ty, theta=theta)

    @classmethod
    def sample(cls, rng: np.random.Generator) -> "MisalignSpec":
        return cls(tx=rng.uniform(-4, 4), ty=rng.uniform(-4, 4), theta=rng.uniform(-3, 3))


def misalign(img: ArrayLike, spec: MisalignSpec) -> np.ndarray:
    """Rotate about the centre by theta, then translate by (tx, ty)."""
    image = as_image(img)
    if spec.is_identity():
        return image.copy()
    angle = np.deg2rad(spec.theta)
    rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    inverse = rotation.T
    center = (np.array(image.shape, dtype=float) - 1.0) / 2.0
    shift = np.array([spec.ty, spec.tx])
    offset = center - inverse @ (center + shift)
    return affine_transform(image, inverse, offset=offset, order=1, mode="nearest")

"""Synthetic two-contrast phantom pairs."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy.ndimage import gaussian_filter, sobel

from canm.data.imageio import encode_png
from canm.data.kspace import check_scale, kspace_degrade
from canm.data.transforms import NormalizationRecord, normalize
from canm.utils.fs import staged_directory

logger = logging.getLogger(__name__)


@dataclass
class ImagePair:
    ref: np.ndarray
    hr_target: np.ndarray
    lr_small: np.ndarray
    lr_interp: np.ndarray
    scale: int
    normalization: dict[str, NormalizationRecord]
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    def meta(self) -> dict:
        return {
            "scale": self.scale,
            "seed": self.seed,
            "normalization": {k: v.model_dump() for k, v in self.normalization.items()},
            **self.metadata,
        }


def _label_map(rng: np.random.Generator, H: int, W: int) -> np.ndarray:
    """Tissue labels in (0, 1], background 0."""
    yy, xx = np.mgrid[0:H, 0:W]
    y = (yy - (H - 1) / 2) / (H / 2)
    x = (xx - (W - 1) / 2) / (W / 2)
    labels = np.zeros((H, W))
    head = (x / rng.uniform(0.75, 0.9)) ** 2 + (y / rng.uniform(0.8, 0.95)) ** 2 <= 1.0
    labels[head] = rng.uniform(0.3, 0.5)
    for _ in range(int(rng.integers(5, 10))):
        cy, cx = rng.uniform(-0.5, 0.5, size=2)
        ay, ax = rng.uniform(0.08, 0.35, size=2)
        angle = rng.uniform(0, np.pi)
        u = (x - cx) * np.cos(angle) + (y - cy) * np.sin(angle)
        v = -(x - cx) * np.sin(angle) + (y - cy) * np.cos(angle)
        blob = ((u / ax) ** 2 + (v / ay) ** 2 <= 1.0) & head
        labels[blob] = rng.uniform(0.1, 1.0)
    return labels


def _contrast_a(labels: np.ndarray) -> np.ndarray:
    return labels


def _contrast_b(labels: np.ndarray) -> np.ndarray:
    return np.where(labels > 0, 0.9 * (1.0 - labels) + 0.1, 0.0)


def edge_map(img: np.ndarray) -> np.ndarray:
    return np.hypot(sobel(img, axis=0, mode="nearest"), sobel(img, axis=1, mode="nearest"))


def edge_correlation(a: np.ndarray, b: np.ndarray) -> float:
    ea, eb = edge_map(a).ravel(), edge_map(b).ravel()
    if ea.std() == 0 or eb.std() == 0:
        return 0.0
    return float(np.corrcoef(ea, eb)[0, 1])


def synth_pair(seed: int, H: int, W: int, s: int) -> ImagePair:
    """Same anatomy rendered in two contrasts; the second is degraded in k-space."""
    check_scale(H, W, s)
    rng = np.random.default_rng(seed)
    labels = _label_map(rng, H, W)
    sigma = max(H, W) / 128.0
    ref, ref_record = normalize(gaussian_filter(_contrast_a(labels), sigma))
    hr, hr_record = normalize(gaussian_filter(_contrast_b(labels), sigma))
    lr_small, lr_interp = kspace_degrade(hr, s)
    correlation = edge_correlation(ref, hr)
    logger.debug(f"synth_pair seed={seed} {H}x{W} s={s}: edge correlation {correlation:.3f}")
    return ImagePair(
        ref=ref,
        hr_target=hr,
        lr_small=lr_small,
        lr_interp=lr_interp,
        scale=s,
        normalization={"ref": ref_record, "hr": hr_record},
        seed=seed,
        metadata={"edge_correlation": correlation, "size": [H, W]},
    )


def export_pair(pair: ImagePair, directory: Union[str, Path], bits: int = 16) -> None:
    """Write ref.png, hr.png, lr_small.png, lr_interp.png and meta.json."""
    with staged_directory(Path(directory)) as staging:
        for name, img in (
            ("ref", pair.ref),
            ("hr", pair.hr_target),
            ("lr_small", pair.lr_small),
            ("lr_interp", pair.lr_interp),
        ):
            (staging / f"{name}.png").write_bytes(encode_png(img, bits))
        (staging / "meta.json").write_text(json.dumps(pair.meta(), indent=2, sort_keys=True), encoding="utf-8")

"""Image-quality metrics on [0, 1] images."""

from __future__ import annotations

import math
from typing import Union

import numpy as np
from scipy.signal import correlate2d

from canm.errors import ShapeError, UsageError
from canm.metrics.reports import ImageMetrics, MetricReport
from canm.tensor.tensor import Tensor

ArrayLike = Union[Tensor, np.ndarray]

WINDOW = 11
SIGMA = 1.5
K1, K2 = 0.01, 0.03


def _pair(y: ArrayLike, t: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    a = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=np.float64)
    b = t.data if isinstance(t, Tensor) else np.asarray(t, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"metric inputs differ in shape: {a.shape} vs {b.shape}")
    return a.astype(np.float64), b.astype(np.float64)


def _image(a: np.ndarray) -> np.ndarray:
    a = np.squeeze(a)
    if a.ndim != 2:
        raise ShapeError(f"expected a single 2-D image, got shape {a.shape}")
    return a


def psnr(y: ArrayLike, t: ArrayLike, data_range: float = 1.0) -> float:
    """10 log10(range^2 / MSE); identical inputs give +inf."""
    a, b = _pair(y, t)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range**2 / mse)


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(offsets**2) / (2.0 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim_maps(y: ArrayLike, t: ArrayLike, data_range: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """(luminance map, contrast-structure map) over valid window positions."""
    a, b = _pair(y, t)
    a, b = _image(a), _image(b)
    if a.shape[0] < WINDOW or a.shape[1] < WINDOW:
        raise UsageError(f"SSIM needs images of at least {WINDOW}x{WINDOW}, got {a.shape}")
    window = gaussian_window()
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2

    def filt(img: np.ndarray) -> np.ndarray:
        return correlate2d(img, window, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    luminance = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    contrast_structure = (2.0 * cov + c2) / (var_a + var_b + c2)
    return luminance, contrast_structure


def ssim(y: ArrayLike, t: ArrayLike, data_range: float = 1.0) -> float:
    """Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), mean over valid positions."""
    luminance, contrast_structure = ssim_maps(y, t, data_range)
    return float(np.mean(luminance * contrast_structure))


def score(y: ArrayLike, t: ArrayLike, name: str = "image") -> ImageMetrics:
    a, b = _pair(y, t)
    return ImageMetrics(name=name, psnr=psnr(a, b), ssim=ssim(a, b), l1=float(np.mean(np.abs(a - b))))


def score_batch(y: ArrayLike, t: ArrayLike, prefix: str = "image") -> MetricReport:
    """Per-image metrics over the leading axis of [B, 1, H, W] (or [B, H, W]) batches."""
    a, b = _pair(y, t)
    if a.ndim == 2:
        a, b = a[None], b[None]
    return MetricReport.from_images(score(a[i], b[i], f"{prefix}{i}") for i in range(a.shape[0]))


def ssim_components(y: ArrayLike, t: ArrayLike, data_range: float = 1.0) -> tuple[float, float]:
    """Mean luminance and mean contrast-structure terms."""
    luminance, contrast_structure = ssim_maps(y, t, data_range)
    return float(np.mean(luminance)), float(np.mean(contrast_structure))

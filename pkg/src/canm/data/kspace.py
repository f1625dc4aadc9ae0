"""Retrospective k-space degradation.

Conventions: orthonormal 2-D FFT, spectrum centred with fftshift. The kept
band spans indices [H/2 - H/(2s), H/2 + H/(2s)) along rows (same for
columns), i.e. the Nyquist side of an even grid is included at the low end.
For the zero-filled reconstruction the band is completed by its mirror -B
so the retained spectrum is Hermitian and the inverse transform is real.
"""

from __future__ import annotations

import logging
from typing import Union

import numpy as np

from canm.errors import ShapeError, UsageError
from canm.tensor.tensor import Tensor

logger = logging.getLogger(__name__)

SCALES = (2, 4)
IMAG_TOLERANCE = 1e-9

ArrayLike = Union[Tensor, np.ndarray]


def as_image(img: ArrayLike) -> np.ndarray:
    data = img.data if isinstance(img, Tensor) else np.asarray(img, dtype=np.float64)
    if data.ndim != 2:
        raise ShapeError(f"expected a 2-D image, got shape {data.shape}")
    return data


def centered_fft(img: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.fft2(img, norm="ortho"))


def centered_ifft(spectrum: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(np.fft.ifftshift(spectrum), norm="ortho")


def kept_band(H: int, W: int, s: int) -> tuple[slice, slice]:
    """Row and column slices of the retained central block (shifted coordinates)."""
    return slice(H // 2 - H // (2 * s), H // 2 + H // (2 * s)), slice(W // 2 - W // (2 * s), W // 2 + W // (2 * s))


def band_mask(H: int, W: int, s: int) -> np.ndarray:
    """Boolean mask of B union -B in shifted coordinates."""
    rows, cols = kept_band(H, W, s)
    mask = np.zeros((H, W), dtype=bool)
    mask[rows, cols] = True
    mirror_r = (H - np.arange(H)) % H
    mirror_c = (W - np.arange(W)) % W
    return mask | mask[np.ix_(mirror_r, mirror_c)]


def check_scale(H: int, W: int, s: int) -> None:
    if s not in SCALES:
        raise UsageError(f"scale must be one of {list(SCALES)}, got {s}")
    if H % s or W % s:
        raise ShapeError(f"image size {(H, W)} is not divisible by scale {s}")


def kspace_degrade(img: ArrayLike, s: int, clamp: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Return (lr_small [H/s, W/s], lr_interp [H, W])."""
    image = as_image(img)
    H, W = image.shape
    check_scale(H, W, s)
    spectrum = centered_fft(image)

    rows, cols = kept_band(H, W, s)
    lr_small = np.real(centered_ifft(spectrum[rows, cols])) / s

    full = centered_ifft(np.where(band_mask(H, W, s), spectrum, 0.0))
    residue = float(np.max(np.abs(np.imag(full)))) if full.size else 0.0
    if residue > IMAG_TOLERANCE:
        logger.warning(f"zero-filled reconstruction has imaginary residue {residue:.3e}")
    lr_interp = np.real(full)

    if clamp:
        lr_small = np.clip(lr_small, 0.0, 1.0)
        lr_interp = np.clip(lr_interp, 0.0, 1.0)
    return lr_small, lr_interp

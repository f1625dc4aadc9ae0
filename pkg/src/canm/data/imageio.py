"""8/16-bit grayscale PNG in and out."""

from __future__ import annotations

import io
import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from canm.data.kspace import ArrayLike, as_image
from canm.errors import ImageIOError, UsageError
from canm.utils.fs import atomic_write_bytes

logger = logging.getLogger(__name__)

_MAXVAL = {8: 255, 16: 65535}
_MODE_BITS = {"L": 8, "I;16": 16, "I;16B": 16, "I;16L": 16, "I": 16}


def _load(path: Path) -> tuple[int, np.ndarray]:
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            pixels = np.array(im)
    except FileNotFoundError as e:
        raise ImageIOError(f"Image not found: {path}") from e
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise ImageIOError(f"Cannot decode {path}: {e}") from e
    if mode not in _MODE_BITS:
        raise ImageIOError(f"{path}: unsupported image mode '{mode}', expected 8- or 16-bit grayscale")
    return _MODE_BITS[mode], pixels


def image_bits(path: Union[str, Path]) -> int:
    """Bit depth (8 or 16) of a grayscale PNG."""
    bits, _ = _load(Path(path))
    return bits


def read_image(path: Union[str, Path]) -> np.ndarray:
    """Read a grayscale PNG into float64 values in [0, 1]."""
    path = Path(path)
    bits, pixels = _load(path)
    if pixels.ndim != 2:
        raise ImageIOError(f"{path}: expected a single-channel image, got shape {pixels.shape}")
    return pixels.astype(np.float64) / _MAXVAL[bits]


def quantize(img: ArrayLike, bits: int = 8) -> np.ndarray:
    """Clip to [0, 1] and round half to even onto the integer grid."""
    if bits not in _MAXVAL:
        raise UsageError(f"bit depth must be 8 or 16, got {bits}")
    maxval = _MAXVAL[bits]
    levels = np.rint(np.clip(as_image(img), 0.0, 1.0) * maxval)
    return levels.astype(np.uint8 if bits == 8 else np.uint16)


def encode_png(img: ArrayLike, bits: int = 8) -> bytes:
    levels = quantize(img, bits)
    im = Image.fromarray(levels)
    buffer = io.BytesIO()
    im.save(buffer, format="PNG")
    return buffer.getvalue()


def write_image(img: ArrayLike, path: Union[str, Path], bits: int = 8) -> None:
    atomic_write_bytes(Path(path), encode_png(img, bits))
    logger.debug(f"wrote {bits}-bit image {path}")

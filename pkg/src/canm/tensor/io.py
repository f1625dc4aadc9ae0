"""Binary tensor files.

Layout: b"CANM", u8 dtype tag (0 = float64, 1 = float32), u8 rank, rank x u32
little-endian dims, then the row-major little-endian payload.
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from canm.errors import CheckpointError, UsageError
from canm.tensor.tensor import Tensor
from canm.utils.fs import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"CANM"
_TAGS = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}

ArrayLike = Union[Tensor, np.ndarray]


def encode_tensor(value: ArrayLike) -> bytes:
    data = value.data if isinstance(value, Tensor) else np.asarray(value)
    if data.dtype not in _TAGS:
        raise UsageError(f"Cannot serialise dtype {data.dtype}; only float64 and float32 are supported")
    if data.ndim > 255:
        raise UsageError(f"Rank {data.ndim} exceeds the format limit of 255")
    tag = _TAGS[data.dtype]
    header = MAGIC + struct.pack("<BB", tag, data.ndim) + struct.pack(f"<{data.ndim}I", *data.shape)
    return header + np.ascontiguousarray(data, dtype=_DTYPES[tag]).tobytes()


def decode_tensor(blob: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(blob) < 6 or blob[:4] != MAGIC:
        raise CheckpointError(f"{source}: not a CANM tensor file (bad magic)")
    tag, rank = struct.unpack_from("<BB", blob, 4)
    if tag not in _DTYPES:
        raise CheckpointError(f"{source}: unknown dtype tag {tag}")
    offset = 6 + 4 * rank
    if len(blob) < offset:
        raise CheckpointError(f"{source}: truncated header")
    shape = struct.unpack_from(f"<{rank}I", blob, 6)
    dtype = _DTYPES[tag]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(blob) - offset != expected:
        raise CheckpointError(
            f"{source}: payload has {len(blob) - offset} bytes, expected {expected} for shape {tuple(shape)}"
        )
    return np.frombuffer(blob, dtype=dtype, offset=offset).reshape(shape).astype(dtype.newbyteorder("="))


def save_tensor(value: ArrayLike, path: Union[str, Path]) -> None:
    atomic_write_bytes(Path(path), encode_tensor(value))


def load_tensor(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"Cannot read tensor file {path}: {e}") from e
    return decode_tensor(blob, source=str(path))

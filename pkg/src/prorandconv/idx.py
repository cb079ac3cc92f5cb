"""IDX file parsing (the MNIST container format) and fixture writing.

Big-endian headers: magic 0x00000803 for rank-3 u8 image tensors, 0x00000801
for rank-1 u8 label vectors. Malformed streams raise distinct errors and
never yield partial data.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import Batch

__all__ = [
    "IdxError",
    "IdxMagicError",
    "IdxTruncatedError",
    "IdxDimensionError",
    "IMAGE_MAGIC",
    "LABEL_MAGIC",
    "parse_idx",
    "parse_idx_file",
    "write_idx_images",
    "write_idx_labels",
]

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

# Headers claiming more than this many payload bytes are rejected outright.
MAX_ELEMENTS = 1 << 30


class IdxError(ValueError):
    """Base class for malformed IDX streams."""


class IdxMagicError(IdxError):
    """Unrecognized magic number."""


class IdxTruncatedError(IdxError):
    """Stream ends before the declared payload."""


class IdxDimensionError(IdxError):
    """Declared dimensions are zero or implausibly large."""


def parse_idx(data: bytes) -> Batch | np.ndarray:
    """Parse an IDX byte stream.

    Image files come back as a ``Batch`` of single-channel images normalized
    to [-1, 1] (float32); label files come back as an int64 vector.
    """
    if len(data) < 4:
        raise IdxTruncatedError(f"stream has only {len(data)} bytes, no room for a magic number")
    (magic,) = struct.unpack(">I", data[:4])
    if magic == IMAGE_MAGIC:
        rank = 3
    elif magic == LABEL_MAGIC:
        rank = 1
    else:
        raise IdxMagicError(f"unrecognized IDX magic 0x{magic:08x}")
    header_len = 4 + 4 * rank
    if len(data) < header_len:
        raise IdxTruncatedError(
            f"stream has {len(data)} bytes but the rank-{rank} header needs {header_len}"
        )
    dims = struct.unpack(f">{rank}I", data[4:header_len])
    if any(d == 0 for d in dims):
        raise IdxDimensionError(f"zero-sized dimension in {dims}")
    count = 1
    for d in dims:
        count *= d
    if count > MAX_ELEMENTS:
        raise IdxDimensionError(f"dimensions {dims} declare {count} elements, over the cap")
    payload = data[header_len:]
    if len(payload) < count:
        raise IdxTruncatedError(f"payload has {len(payload)} bytes, header declares {count}")
    if len(payload) > count:
        raise IdxError(f"{len(payload) - count} trailing bytes after the declared payload")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(dims)
    if magic == LABEL_MAGIC:
        return arr.astype(np.int64)
    pixels = (arr.astype(np.float32) / 127.5 - 1.0)[:, None]
    return Batch(pixels)


def parse_idx_file(path) -> Batch | np.ndarray:
    with open(path, "rb") as f:
        return parse_idx(f.read())


def write_idx_images(path, images_u8: np.ndarray) -> None:
    """Write a (N, H, W) uint8 array as an IDX image file."""
    arr = np.asarray(images_u8, dtype=np.uint8)
    if arr.ndim != 3:
        raise ValueError(f"expected (N, H, W) images, got rank {arr.ndim}")
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, *arr.shape))
        f.write(arr.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    """Write a label vector as an IDX label file."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ValueError("labels must be a vector")
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError("labels must fit in u8")
    with open(path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, arr.shape[0]))
        f.write(arr.astype(np.uint8).tobytes())

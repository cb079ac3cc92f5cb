"""PRCT tensor dump: a tiny exact-round-trip container for float32 tensors.

Layout (all little-endian): magic "PRCT", u16 version (currently 1), u16
rank, rank x u32 dims, then the payload as row-major little-endian float32.
This is the interop format between the CLI, the HTTP service, and external
bindings, so writes must be byte-stable: the payload is the raw f32 memory.
"""

from __future__ import annotations

import struct

import numpy as np

__all__ = ["TensorDumpError", "MAGIC", "VERSION", "write_tensor_dump", "read_tensor_dump",
           "write_tensor_dump_file", "read_tensor_dump_file"]

MAGIC = b"PRCT"
VERSION = 1


class TensorDumpError(ValueError):
    """Malformed PRCT stream."""


def write_tensor_dump(arr: np.ndarray) -> bytes:
    """Serialize an array as float32; dims come from the array shape."""
    a = np.ascontiguousarray(arr, dtype="<f4")
    if a.ndim < 1:
        a = a.reshape(1)
    header = MAGIC + struct.pack("<HH", VERSION, a.ndim)
    header += struct.pack(f"<{a.ndim}I", *a.shape)
    return header + a.tobytes()


def read_tensor_dump(data: bytes) -> np.ndarray:
    """Parse PRCT bytes back into a float32 array, bit-exact."""
    if len(data) < 8:
        raise TensorDumpError("stream too short for a PRCT header")
    if data[:4] != MAGIC:
        raise TensorDumpError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version, rank = struct.unpack("<HH", data[4:8])
    if version != VERSION:
        raise TensorDumpError(f"unsupported PRCT version {version}")
    if rank < 1:
        raise TensorDumpError("rank must be >= 1")
    header_len = 8 + 4 * rank
    if len(data) < header_len:
        raise TensorDumpError("stream too short for the declared rank")
    dims = struct.unpack(f"<{rank}I", data[8:header_len])
    count = 1
    for d in dims:
        count *= d
    payload = data[header_len:]
    if len(payload) != count * 4:
        raise TensorDumpError(
            f"payload is {len(payload)} bytes, dims {dims} require {count * 4}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def write_tensor_dump_file(path, arr: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(write_tensor_dump(arr))


def read_tensor_dump_file(path) -> np.ndarray:
    with open(path, "rb") as f:
        return read_tensor_dump(f.read())

"""Minimal PNG reading and writing for 8-bit grayscale and RGB images.

The encoder always emits non-interlaced images with filter type 0 per row and
one zlib-compressed IDAT chunk, which keeps output bytes deterministic. The
decoder handles all five scanline filters but only bit depth 8, color types 0
(gray) and 2 (RGB), non-interlaced; anything else is rejected with a message.
Grayscale reads are replicated to 3 channels since the augmentation pipeline
is RGB in, RGB out.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .core import Image, denormalize_u8, normalize_u8

__all__ = ["PngError", "read_png", "write_png", "read_png_file", "write_png_file"]

_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class PngError(ValueError):
    """Malformed or unsupported PNG data."""


def _chunk(kind: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + kind
        + payload
        + struct.pack(">I", zlib.crc32(kind + payload) & 0xFFFFFFFF)
    )


def write_png(img: Image) -> bytes:
    """Encode an image (1 or 3 channels) to PNG bytes after denormalizing."""
    u8 = denormalize_u8(img)
    c, h, w = u8.shape
    if c == 1:
        color_type = 0
    elif c == 3:
        color_type = 2
    else:
        raise PngError(f"can only write 1- or 3-channel images, got {c} channels")
    rows = u8.transpose(1, 2, 0).reshape(h, w * c)
    raw = b"".join(b"\x00" + rows[i].tobytes() for i in range(h))
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    return (
        _SIGNATURE
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(raw, 6))
        + _chunk(b"IEND", b"")
    )


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw: bytes, h: int, w: int, bpp: int) -> np.ndarray:
    stride = w * bpp
    if len(raw) != h * (1 + stride):
        raise PngError(f"decompressed size {len(raw)} does not match {h} rows of {1 + stride}")
    out = np.zeros((h, stride), dtype=np.uint8)
    prior = np.zeros(stride, dtype=np.int32)
    data = np.frombuffer(raw, dtype=np.uint8).reshape(h, 1 + stride)
    for y in range(h):
        ftype = int(data[y, 0])
        line = data[y, 1:].astype(np.int32)
        if ftype == 0:
            recon = line
        elif ftype == 1:
            recon = line.copy()
            for ch in range(bpp):
                recon[ch::bpp] = np.cumsum(recon[ch::bpp]) % 256
        elif ftype == 2:
            recon = (line + prior) % 256
        elif ftype == 3:
            recon = line.copy()
            for i in range(stride):
                left = recon[i - bpp] if i >= bpp else 0
                recon[i] = (recon[i] + (left + prior[i]) // 2) % 256
        elif ftype == 4:
            recon = line.copy()
            for i in range(stride):
                left = recon[i - bpp] if i >= bpp else 0
                ul = prior[i - bpp] if i >= bpp else 0
                recon[i] = (recon[i] + _paeth(int(left), int(prior[i]), int(ul))) % 256
        else:
            raise PngError(f"unknown scanline filter type {ftype}")
        out[y] = recon
        prior = recon.astype(np.int32)
    return out


def read_png(data: bytes) -> Image:
    """Decode PNG bytes to a 3-channel Image in [-1, 1]."""
    if data[: len(_SIGNATURE)] != _SIGNATURE:
        raise PngError("not a PNG stream (bad signature)")
    pos = len(_SIGNATURE)
    ihdr = None
    idat = bytearray()
    seen_end = False
    while pos < len(data):
        if pos + 8 > len(data):
            raise PngError("truncated chunk header")
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        kind = data[pos + 4 : pos + 8]
        body = data[pos + 8 : pos + 8 + length]
        if len(body) != length or pos + 12 + length > len(data):
            raise PngError(f"truncated {kind!r} chunk")
        (crc,) = struct.unpack(">I", data[pos + 8 + length : pos + 12 + length])
        if crc != zlib.crc32(kind + body) & 0xFFFFFFFF:
            raise PngError(f"CRC mismatch in {kind!r} chunk")
        pos += 12 + length
        if kind == b"IHDR":
            if ihdr is not None:
                raise PngError("duplicate IHDR")
            ihdr = body
        elif kind == b"IDAT":
            idat.extend(body)
        elif kind == b"IEND":
            seen_end = True
            break
    if ihdr is None:
        raise PngError("missing IHDR")
    if not seen_end:
        raise PngError("missing IEND")
    w, h, depth, color_type, comp, filt, interlace = struct.unpack(">IIBBBBB", ihdr)
    if depth != 8:
        raise PngError(f"unsupported bit depth {depth}, only 8 is handled")
    if color_type not in (0, 2):
        raise PngError(f"unsupported color type {color_type}, only gray (0) and RGB (2)")
    if comp != 0 or filt != 0:
        raise PngError("unsupported compression or filter method")
    if interlace != 0:
        raise PngError("interlaced PNGs are not supported")
    if w < 1 or h < 1:
        raise PngError("empty image")
    bpp = 1 if color_type == 0 else 3
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as e:
        raise PngError(f"corrupt IDAT stream: {e}") from e
    flat = _unfilter(raw, h, w, bpp)
    pixels = flat.reshape(h, w, bpp).transpose(2, 0, 1)
    if bpp == 1:
        pixels = np.repeat(pixels, 3, axis=0)
    return normalize_u8(pixels)


def read_png_file(path) -> Image:
    with open(path, "rb") as f:
        return read_png(f.read())


def write_png_file(path, img: Image) -> None:
    with open(path, "wb") as f:
        f.write(write_png(img))

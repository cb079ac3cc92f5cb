"""Tensor containers, a splittable deterministic RNG, and pixel-range helpers.

Everything downstream (sampling, augmentation, training) builds on the three
types here: ``Image`` for a single channels-first picture, ``Batch`` for a
shape-homogeneous stack of them, and ``RngStream`` as the single carrier of
randomness. All values in the working pixel range live in [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RngStream",
    "Image",
    "Batch",
    "normalize_u8",
    "denormalize_u8",
    "gaussian_draw",
]


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream addressed by a seed and a split path.

    Two streams with equal ``(seed, path)`` yield identical draw sequences;
    children split off at distinct indices are statistically independent.
    Streams are values: drawing never mutates them, so the same stream object
    always reproduces the same numbers.
    """

    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if any(i < 0 for i in self.path):
            raise ValueError("substream indices must be non-negative")

    def split(self, index: int) -> "RngStream":
        """Return the child stream at ``index``."""
        index = int(index)
        if index < 0:
            raise ValueError("substream index must be non-negative")
        return RngStream(self.seed, self.path + (index,))

    def generator(self) -> np.random.Generator:
        """Fresh counter-based generator for this (seed, path) address."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))


def gaussian_draw(rng: RngStream, n: int, sigma: float) -> np.ndarray:
    """Draw ``n`` i.i.d. samples from N(0, sigma^2)."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if n < 0:
        raise ValueError("n must be non-negative")
    return rng.generator().normal(0.0, sigma, size=int(n))


@dataclass(frozen=True)
class Image:
    """A single channels-first image, float64, shape (C, H, W)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"image data must be rank 3 (C, H, W), got rank {arr.ndim}")
        if min(arr.shape) < 1:
            raise ValueError(f"image dims must all be >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("image data contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class Batch:
    """Shape-homogeneous image stack with optional integer labels.

    Internally the batch is stored stacked as (N, C, H, W); the dtype of the
    stacked array is preserved (float32 for large datasets, float64 for
    precision-sensitive work). ``images`` materializes per-image views.
    """

    data: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if arr.ndim != 4:
            raise ValueError(f"batch data must be rank 4 (N, C, H, W), got rank {arr.ndim}")
        if arr.shape[0] < 1:
            raise ValueError("batch must be nonempty")
        if min(arr.shape[1:]) < 1:
            raise ValueError(f"image dims must all be >= 1, got {arr.shape[1:]}")
        object.__setattr__(self, "data", arr)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (arr.shape[0],):
                raise ValueError(
                    f"labels must have one entry per image, got {lab.shape} for {arr.shape[0]} images"
                )
            object.__setattr__(self, "labels", lab)

    @classmethod
    def from_images(cls, images: "list[Image] | tuple[Image, ...]", labels=None) -> "Batch":
        if not images:
            raise ValueError("batch must be nonempty")
        shape = images[0].shape
        for im in images:
            if im.shape != shape:
                raise ValueError(f"batch images must share one shape, saw {shape} and {im.shape}")
        return cls(np.stack([im.data for im in images]), labels)

    def stack(self) -> np.ndarray:
        """The (N, C, H, W) array backing this batch."""
        return self.data

    @property
    def images(self) -> tuple[Image, ...]:
        return tuple(Image(self.data[i]) for i in range(self.data.shape[0]))

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.data.shape[1:]  # type: ignore[return-value]

    def __len__(self) -> int:
        return self.data.shape[0]


def normalize_u8(pixels: np.ndarray) -> Image:
    """Map 8-bit pixels linearly onto [-1, 1]: v -> v / 127.5 - 1.

    Accepts (H, W) or (C, H, W); a bare (H, W) array becomes one channel.
    """
    arr = np.asarray(pixels)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected (H, W) or (C, H, W) pixel array, got rank {arr.ndim}")
    if arr.dtype != np.uint8:
        if np.any((arr < 0) | (arr > 255)):
            raise ValueError("pixel values must lie in [0, 255]")
    return Image(arr.astype(np.float64) / 127.5 - 1.0)


def denormalize_u8(img: Image) -> np.ndarray:
    """Map [-1, 1] back to 8-bit counts, clamping and rounding half up."""
    v = np.clip(img.data, -1.0, 1.0) * 127.5 + 127.5
    return np.floor(v + 0.5).astype(np.uint8)

"""Deterministic synthetic digit corpus in MNIST's IDX container format.

Renders the ten digits as jittered stroke glyphs (random rotation, shear,
scale, translation, stroke width, intensity, pixel noise) at 28x28, white on
black, and writes train/test IDX files under MNIST's standard file names.
Used as the desk-scale stand-in when the real MNIST files are not available;
the generator is seeded, so every byte of the corpus is reproducible.
"""

from __future__ import annotations

import argparse
import math
from pathlib import Path

import numpy as np

from .core import RngStream
from .idx import write_idx_images, write_idx_labels

__all__ = ["render_digit", "generate_images", "build_corpus", "TRAIN_IMAGES", "TRAIN_LABELS",
           "TEST_IMAGES", "TEST_LABELS"]

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"

_SUPER = 4
_SIDE = 28


def _line(p, q, n=24):
    t = np.linspace(0.0, 1.0, n)[:, None]
    return np.asarray(p)[None] * (1 - t) + np.asarray(q)[None] * t


def _arc(cx, cy, rx, ry, a0, a1, n=40):
    t = np.linspace(a0, a1, n)
    return np.stack([cx + rx * np.cos(t), cy + ry * np.sin(t)], axis=1)


def _strokes() -> dict[int, np.ndarray]:
    tau = 2 * math.pi
    glyphs = {
        0: [_arc(0.5, 0.5, 0.26, 0.36, 0, tau, 80)],
        1: [_line((0.38, 0.28), (0.56, 0.12)), _line((0.56, 0.12), (0.56, 0.88))],
        2: [
            _arc(0.5, 0.3, 0.24, 0.2, math.pi, 2.05 * math.pi, 40),
            _line((0.72, 0.38), (0.27, 0.88)),
            _line((0.27, 0.88), (0.76, 0.88)),
        ],
        3: [
            _arc(0.47, 0.3, 0.22, 0.19, 1.25 * math.pi, 2.4 * math.pi, 40),
            _arc(0.47, 0.68, 0.24, 0.21, 1.6 * math.pi, 2.85 * math.pi, 40),
        ],
        4: [
            _line((0.62, 0.1), (0.24, 0.62)),
            _line((0.24, 0.62), (0.8, 0.62)),
            _line((0.62, 0.1), (0.62, 0.9)),
        ],
        5: [
            _line((0.74, 0.12), (0.32, 0.12)),
            _line((0.32, 0.12), (0.29, 0.46)),
            _arc(0.48, 0.65, 0.25, 0.22, 1.35 * math.pi, 2.75 * math.pi, 48),
        ],
        6: [
            _arc(0.62, 0.3, 0.33, 0.55, 0.8 * math.pi, 1.15 * math.pi, 30),
            _arc(0.48, 0.67, 0.22, 0.2, 0, tau, 60),
        ],
        7: [_line((0.24, 0.12), (0.76, 0.12)), _line((0.76, 0.12), (0.42, 0.9))],
        8: [
            _arc(0.5, 0.3, 0.2, 0.18, 0, tau, 56),
            _arc(0.5, 0.68, 0.23, 0.2, 0, tau, 60),
        ],
        9: [
            _arc(0.52, 0.33, 0.22, 0.2, 0, tau, 60),
            _arc(0.38, 0.7, 0.33, 0.55, -0.15 * math.pi, 0.2 * math.pi, 30),
        ],
    }
    return {d: np.concatenate(parts) for d, parts in glyphs.items()}


_GLYPHS = _strokes()

_BRUSH_CACHE: dict[int, np.ndarray] = {}


def _brush(radius: float) -> np.ndarray:
    key = int(round(radius * 4))
    offs = _BRUSH_CACHE.get(key)
    if offs is None:
        r = key / 4.0
        ri = int(math.ceil(r))
        dy, dx = np.mgrid[-ri : ri + 1, -ri : ri + 1]
        keep = dy * dy + dx * dx <= r * r + 1e-9
        offs = np.stack([dy[keep], dx[keep]], axis=1)
        _BRUSH_CACHE[key] = offs
    return offs


def render_digit(digit: int, g: np.random.Generator) -> np.ndarray:
    """One 28x28 uint8 digit image with randomized glyph geometry."""
    pts = _GLYPHS[digit]
    theta = g.uniform(-0.22, 0.22)
    shear = g.uniform(-0.25, 0.25)
    sx, sy = g.uniform(0.78, 1.1, size=2)
    shift = g.uniform(-0.05, 0.05, size=2)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    sh = np.array([[1.0, shear], [0.0, 1.0]])
    a = rot @ sh @ np.diag([sx, sy])
    p = (pts - 0.5) @ a.T + 0.5 + shift

    s = _SUPER
    canvas = np.zeros((_SIDE * s, _SIDE * s), dtype=np.float32)
    px = p * (20 * s) + 4 * s
    offs = _brush(g.uniform(0.55, 1.15) * s)
    centers = np.round(px[:, ::-1]).astype(np.int64)  # (y, x)
    idx = centers[:, None, :] + offs[None, :, :]
    np.clip(idx, 0, _SIDE * s - 1, out=idx)
    canvas[idx[:, :, 0].ravel(), idx[:, :, 1].ravel()] = 1.0

    img = canvas.reshape(_SIDE, s, _SIDE, s).mean(axis=(1, 3))
    img *= g.uniform(0.72, 1.0)
    img += g.normal(0.0, 0.02, size=img.shape)
    np.clip(img, 0.0, 1.0, out=img)
    return np.round(img * 255).astype(np.uint8)


def generate_images(n: int, g: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Balanced shuffled labels plus rendered images, all from one generator."""
    labels = np.tile(np.arange(10), (n + 9) // 10)[:n]
    labels = labels[g.permutation(n)]
    images = np.empty((n, _SIDE, _SIDE), dtype=np.uint8)
    for i in range(n):
        images[i] = render_digit(int(labels[i]), g)
    return images, labels


def build_corpus(out_dir, n_train: int = 12000, n_test: int = 2000, seed: int = 20240808) -> Path:
    """Write the four IDX files into ``out_dir`` and return that path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g = RngStream(seed).generator()
    train_x, train_y = generate_images(n_train, g)
    test_x, test_y = generate_images(n_test, g)
    write_idx_images(out / TRAIN_IMAGES, train_x)
    write_idx_labels(out / TRAIN_LABELS, train_y)
    write_idx_images(out / TEST_IMAGES, test_x)
    write_idx_labels(out / TEST_LABELS, test_y)
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Generate the synthetic digit IDX corpus")
    ap.add_argument("--out", required=True)
    ap.add_argument("--train", type=int, default=12000)
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=20240808)
    args = ap.parse_args(argv)
    build_corpus(args.out, args.train, args.test, args.seed)
    print(f"wrote {args.train} train / {args.test} test digits to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

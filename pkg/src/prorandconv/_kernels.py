"""Compiled inner loops for the memory-bound kernels.

Plain nested loops under numba's default strict IEEE mode: no fastmath, no
threading, so results are bit-deterministic and independent of worker count.
Each function specializes per dtype (float32 for training, float64 for the
precision-sensitive library paths).
"""

from __future__ import annotations

from numba import njit

__all__ = [
    "im2col_valid",
    "fold_valid",
    "maxpool2_forward",
    "maxpool2_backward",
    "bilinear_taps",
]


@njit(cache=True)
def im2col_valid(xt, k, cols):
    """Gather valid-convolution columns: xt (C, N, H, W) -> cols (C, k, k, N, Ho, Wo)."""
    c, n, h, w = xt.shape
    ho = h - k + 1
    wo = w - k + 1
    for ci in range(c):
        for a in range(k):
            for b in range(k):
                for ni in range(n):
                    for i in range(ho):
                        src = xt[ci, ni, a + i]
                        dst = cols[ci, a, b, ni, i]
                        for j in range(wo):
                            dst[j] = src[b + j]


@njit(cache=True)
def fold_valid(dcols, k, dxt):
    """Scatter-add column gradients back: dcols (C, k, k, N, Ho, Wo) -> dxt (C, N, H, W)."""
    c = dcols.shape[0]
    n = dcols.shape[3]
    ho = dcols.shape[4]
    wo = dcols.shape[5]
    for ci in range(c):
        for a in range(k):
            for b in range(k):
                for ni in range(n):
                    for i in range(ho):
                        src = dcols[ci, a, b, ni, i]
                        dst = dxt[ci, ni, a + i]
                        for j in range(wo):
                            dst[b + j] += src[j]


@njit(cache=True)
def maxpool2_forward(x, y, arg):
    """2x2 max pooling; arg records the winning window slot (first max wins)."""
    n, c, h, w = x.shape
    for ni in range(n):
        for ci in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    v0 = x[ni, ci, 2 * i, 2 * j]
                    v1 = x[ni, ci, 2 * i, 2 * j + 1]
                    v2 = x[ni, ci, 2 * i + 1, 2 * j]
                    v3 = x[ni, ci, 2 * i + 1, 2 * j + 1]
                    best = v0
                    bi = 0
                    if v1 > best:
                        best = v1
                        bi = 1
                    if v2 > best:
                        best = v2
                        bi = 2
                    if v3 > best:
                        best = v3
                        bi = 3
                    y[ni, ci, i, j] = best
                    arg[ni, ci, i, j] = bi


@njit(cache=True)
def maxpool2_backward(dy, arg, dx):
    """Route pooled gradients to the recorded argmax slots; dx must be zeroed."""
    n, c, h2, w2 = dy.shape
    for ni in range(n):
        for ci in range(c):
            for i in range(h2):
                for j in range(w2):
                    bi = arg[ni, ci, i, j]
                    dx[ni, ci, 2 * i + bi // 2, 2 * j + bi % 2] = dy[ni, ci, i, j]


@njit(cache=True)
def bilinear_taps(xp, idx00, fy, fx, wp, vals):
    """Bilinear sampling of every kernel tap for every channel plane.

    xp: (N*C, Hp*Wp) flattened zero-padded images; idx00: (t, H*W) flat index
    of each sample's top-left corner; fy/fx: fractional parts; wp: padded row
    stride. Writes vals (N*C, t, H*W). Corner reads are guaranteed in bounds
    by the caller's padding.
    """
    nc = xp.shape[0]
    t, hw = idx00.shape
    for m in range(nc):
        row = xp[m]
        for ti in range(t):
            for p in range(hw):
                i00 = idx00[ti, p]
                a = fy[ti, p]
                b = fx[ti, p]
                v0 = row[i00] + b * (row[i00 + 1] - row[i00])
                v1 = row[i00 + wp] + b * (row[i00 + wp + 1] - row[i00 + wp])
                vals[m, ti, p] = v0 + a * (v1 - v0)

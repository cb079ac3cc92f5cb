"""Applying a random convolution block to images, and the progressive loop.

A block application is deformable convolution (kernel taps read the input at
fractionally offset positions via bilinear interpolation, zero outside the
image) followed by contrast diversification (per-channel standardization,
random affine, tanh). The progressive path applies one sampled block L times
with the same parameters; single-layer RandConv baselines are provided for
comparison runs.

All operations are pure: the same inputs and RNG stream give bit-identical
outputs. Batch kernels compute in the dtype of the incoming array (float64
for Image-level calls, float32 for the training fast path).
"""

from __future__ import annotations

import numpy as np

from ._kernels import bilinear_taps
from .core import Batch, Image, RngStream
from .sampler import CHANNELS, AugmentConfig, BlockParams, sample_block, smoothing_mask

__all__ = [
    "conv2d_direct",
    "deform_conv2d",
    "standardize",
    "contrast_diversify",
    "apply_block",
    "apply_block_batch",
    "progressive_augment",
    "progressive_augment_diff",
    "randconv_baseline",
    "smoothed_randconv_baseline",
    "DEFAULT_KERNEL_POOL",
]

DEFAULT_KERNEL_POOL = (1, 3, 5, 7)

_SMOOTH_EPS = 1e-6


def _check_weights(weights: np.ndarray, channels: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 4 or w.shape[-1] != w.shape[-2]:
        raise ValueError(f"weights must be (C_out, C_in, k, k), got {w.shape}")
    if w.shape[-1] % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {w.shape[-1]}")
    if w.shape[1] != channels:
        raise ValueError(f"weight C_in={w.shape[1]} does not match input channels={channels}")
    return w


def _conv_same_batch(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Direct same-size convolution of (N, C, H, W) with (O, C, k, k), zero padded."""
    n, c, h, w_ = x.shape
    o = weights.shape[0]
    k = weights.shape[-1]
    r = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (r, r), (r, r)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    # (N, C, H, W, k, k) -> (C*k*k, N*H*W), row-major over (C, ki, kj)
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c * k * k, n * h * w_)
    w2 = weights.reshape(o, c * k * k).astype(x.dtype, copy=False)
    out = (w2 @ cols).reshape(o, n, h, w_)
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3))


class _DeformPlan:
    """Precomputed bilinear sampling plan for one offset field.

    The gather indices and corner weights depend only on (offsets, k, H, W),
    so a progressive loop builds the plan once and reuses it for every layer
    and every image in the batch.
    """

    def __init__(self, offsets: np.ndarray, k: int, h: int, w: int):
        t = k * k
        r = (k - 1) // 2
        if offsets.shape != (2 * t, h, w):
            raise ValueError(
                f"offsets must be ({2 * t}, {h}, {w}) to match the image, got {offsets.shape}"
            )
        max_off = float(np.max(np.abs(offsets))) if offsets.size else 0.0
        pad = r + 1 + int(np.ceil(max_off))
        self.pad = pad
        self.h, self.w, self.t = h, w, t
        hp, wp = h + 2 * pad, w + 2 * pad
        self.hp, self.wp = hp, wp

        i0 = np.arange(h, dtype=np.float64)[None, :, None]
        j0 = np.arange(w, dtype=np.float64)[None, None, :]
        di = (np.arange(t) // k - r).astype(np.float64)[:, None, None]
        dj = (np.arange(t) % k - r).astype(np.float64)[:, None, None]
        yy = i0 + di + offsets[:t]
        xx = j0 + dj + offsets[t:]
        y0f = np.floor(yy)
        x0f = np.floor(xx)
        y0 = y0f.astype(np.int64) + pad
        x0 = x0f.astype(np.int64) + pad
        self.idx00 = (y0 * wp + x0).reshape(t, h * w)
        self._fy64 = (yy - y0f).reshape(t, h * w)
        self._fx64 = (xx - x0f).reshape(t, h * w)
        self._fy32: np.ndarray | None = None
        self._fx32: np.ndarray | None = None
        self._scratch: dict = {}

    def _fracs(self, dtype) -> tuple[np.ndarray, np.ndarray]:
        if dtype == np.float64:
            return self._fy64, self._fx64
        if self._fy32 is None:
            self._fy32 = self._fy64.astype(np.float32)
            self._fx32 = self._fx64.astype(np.float32)
        return self._fy32, self._fx32

    def _buf(self, name, shape, dtype):
        key = (name, shape, np.dtype(dtype).str)
        buf = self._scratch.get(key)
        if buf is None:
            if len(self._scratch) > 8:
                self._scratch.clear()
            buf = np.zeros(shape, dtype=dtype)
            self._scratch[key] = buf
        return buf

    def apply(self, x: np.ndarray, weights: np.ndarray) -> np.ndarray:
        n, c, h, w_ = x.shape
        t, hw = self.t, self.h * self.w
        o = weights.shape[0]
        p = self.pad
        # Reused zero-initialized pad buffer; only the interior is rewritten,
        # the border stays zero (the out-of-bounds read value).
        xp = self._buf("xp", (n, c, self.hp, self.wp), x.dtype)
        xp[:, :, p : p + h, p : p + w_] = x
        flat = xp.reshape(n * c, self.hp * self.wp)
        fy, fx = self._fracs(x.dtype)
        vals = self._buf("vals", (n * c, t, hw), x.dtype)
        bilinear_taps(flat, self.idx00, fy, fx, self.wp, vals)
        w2 = weights.reshape(o, c * t).astype(x.dtype, copy=False)
        out = np.matmul(w2, vals.reshape(n, c * t, hw))
        return out.reshape(n, o, self.h, self.w)


def _contrast_batch(y: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float) -> np.ndarray:
    mu = y.mean(axis=(2, 3), keepdims=True)
    yc = y - mu
    var = np.mean(yc * yc, axis=(2, 3), keepdims=True)
    xhat = yc / np.sqrt(var + eps)
    g = gamma.astype(y.dtype)[None, :, None, None]
    b = beta.astype(y.dtype)[None, :, None, None]
    return np.tanh(g * xhat + b)


class _BlockApplier:
    """Callable applying one BlockParams to (N, C, H, W) arrays."""

    def __init__(self, params: BlockParams, cfg: AugmentConfig, h: int, w: int):
        self.params = params
        self.cfg = cfg
        self.plan = None
        if params.offsets is not None:
            self.plan = _DeformPlan(params.offsets, params.kernel_size, h, w)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        if self.plan is not None:
            y = self.plan.apply(x, p.weights)
        else:
            y = _conv_same_batch(x, p.weights)
        if self.cfg.enable_contrast and p.gamma is not None:
            y = _contrast_batch(y, p.gamma, p.beta, self.cfg.eps)
        return y


def conv2d_direct(img: Image, weights: np.ndarray) -> Image:
    """Same-size 2D convolution by direct summation with zero padding.

    This is the reference path: deformable convolution with zero offsets must
    agree with it to within float tolerance.
    """
    w = _check_weights(weights, img.channels)
    return Image(_conv_same_batch(img.data[None], w)[0])


def deform_conv2d(img: Image, params: BlockParams) -> Image:
    """Deformable convolution of one image with the block's weights and offsets.

    Each kernel tap at output location (i0, j0) reads the input at
    (i0 + i_m + di_m[i0, j0], j0 + j_m + dj_m[i0, j0]) with bilinear
    interpolation; reads outside the image are zero. Offsets are shared
    across channels. Contrast parameters on ``params`` are ignored here.
    """
    if params.offsets is None:
        raise ValueError("deform_conv2d requires an offsets tensor; use conv2d_direct instead")
    _check_weights(params.weights, img.channels)
    plan = _DeformPlan(params.offsets, params.kernel_size, img.height, img.width)
    return Image(plan.apply(img.data[None], params.weights)[0])


def standardize(img: Image, eps: float = 1e-6) -> Image:
    """Per-channel standardization over all H*W pixels, eps inside the sqrt."""
    x = img.data
    mu = x.mean(axis=(1, 2), keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=(1, 2), keepdims=True)
    return Image(xc / np.sqrt(var + eps))


def contrast_diversify(img: Image, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-6) -> Image:
    """Standardize per channel, apply the random affine, then tanh.

    Output values lie strictly inside (-1, 1). A constant channel maps to
    tanh(beta_c) everywhere (the eps guard zeroes the standardized term).
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if gamma.shape != (img.channels,) or beta.shape != (img.channels,):
        raise ValueError("gamma/beta must have one entry per channel")
    return Image(_contrast_batch(img.data[None], gamma, beta, eps)[0])


def apply_block(img: Image, params: BlockParams, cfg: AugmentConfig) -> Image:
    """One block application: deformable convolution, then contrast if enabled."""
    _check_weights(params.weights, img.channels)
    return Image(_BlockApplier(params, cfg, img.height, img.width)(img.data[None])[0])


def apply_block_batch(x: np.ndarray, params: BlockParams, cfg: AugmentConfig) -> np.ndarray:
    """Batch form of ``apply_block`` on a raw (N, C, H, W) array."""
    return _BlockApplier(params, cfg, x.shape[2], x.shape[3])(x)


def _require_rgb(batch: Batch) -> None:
    if batch.image_shape[0] != CHANNELS:
        raise ValueError(
            f"progressive augmentation requires {CHANNELS}-channel batches, got {batch.image_shape[0]}"
        )


def _draw_reps(cfg: AugmentConfig, rng: RngStream) -> int:
    return int(rng.generator().integers(1, cfg.l_max + 1))


def progressive_augment(
    batch: Batch,
    cfg: AugmentConfig,
    rng: RngStream,
    *,
    reps: int | None = None,
    fixed_sigma_g: float | None = None,
    fixed_sigma_delta: float | None = None,
) -> tuple[Batch, int]:
    """Sample one block, draw L ~ U{1..l_max}, apply the block L times.

    The single BlockParams is shared by every image and every repetition.
    Returns the augmented batch (labels carried over) and the L that was
    used. ``reps`` pins L instead of drawing it; the ``fixed_*`` knobs pin
    sampling scales for visualization sweeps.
    """
    _require_rgb(batch)
    x = batch.stack()
    _, _, h, w = x.shape
    params = sample_block(
        cfg, h, w, rng.split(0), fixed_sigma_g=fixed_sigma_g, fixed_sigma_delta=fixed_sigma_delta
    )
    l_used = int(reps) if reps is not None else _draw_reps(cfg, rng.split(1))
    if l_used < 1:
        raise ValueError("reps must be >= 1")
    applier = _BlockApplier(params, cfg, h, w)
    y = x
    for _ in range(l_used):
        y = applier(y)
    return Batch(y, batch.labels), l_used


def progressive_augment_diff(
    batch: Batch,
    cfg: AugmentConfig,
    rng: RngStream,
    *,
    reps: int | None = None,
) -> Batch:
    """Ablation arm: like ``progressive_augment`` but every one of the L
    applications uses a freshly sampled block."""
    _require_rgb(batch)
    x = batch.stack()
    _, _, h, w = x.shape
    l_used = int(reps) if reps is not None else _draw_reps(cfg, rng.split(1))
    if l_used < 1:
        raise ValueError("reps must be >= 1")
    y = x
    for layer in range(l_used):
        params = sample_block(cfg, h, w, rng.split(0).split(layer))
        y = _BlockApplier(params, cfg, h, w)(y)
    return Batch(y, batch.labels)


def _check_pool(pool) -> tuple[int, ...]:
    pool = tuple(sorted(int(k) for k in pool))
    if not pool:
        raise ValueError("kernel pool must be nonempty")
    if any(k < 1 or k % 2 == 0 for k in pool):
        raise ValueError(f"kernel pool entries must be odd and >= 1, got {pool}")
    return pool


def randconv_baseline(batch: Batch, rng: RngStream, pool=DEFAULT_KERNEL_POOL) -> Batch:
    """Single-layer RandConv: draw k from the pool, one He-initialized kernel,
    one plain convolution. No offsets, smoothing, or contrast stage."""
    pool = _check_pool(pool)
    x = batch.stack()
    c = x.shape[1]
    k = pool[int(rng.split(0).generator().integers(len(pool)))]
    sigma_w = 1.0 / np.sqrt(k * k * c)
    weights = rng.split(1).generator().normal(0.0, sigma_w, size=(c, c, k, k))
    return Batch(_conv_same_batch(x, weights), batch.labels)


def smoothed_randconv_baseline(batch: Batch, rng: RngStream, pool=DEFAULT_KERNEL_POOL) -> Batch:
    """RandConv baseline with the kernel additionally smoothed by a Gaussian
    mask with sigma_g ~ U(eps, 1)."""
    pool = _check_pool(pool)
    x = batch.stack()
    c = x.shape[1]
    k = pool[int(rng.split(0).generator().integers(len(pool)))]
    sigma_w = 1.0 / np.sqrt(k * k * c)
    weights = rng.split(1).generator().normal(0.0, sigma_w, size=(c, c, k, k))
    sigma_g = rng.split(2).generator().uniform(_SMOOTH_EPS, 1.0)
    weights = weights * smoothing_mask(k, sigma_g)
    return Batch(_conv_same_batch(x, weights), batch.labels)

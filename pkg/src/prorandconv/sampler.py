"""Per-batch sampling of one random convolution block.

A block is fully described by ``BlockParams``: Gaussian kernel weights that
may be element-wise smoothed, a spatially correlated offset field for the
deformable convolution, and per-channel affine contrast parameters. One block
is sampled per mini-batch and reused unchanged across all progressive
applications and every image in the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import RngStream

__all__ = [
    "CHANNELS",
    "AugmentConfig",
    "BlockParams",
    "smoothing_mask",
    "sample_weights",
    "sample_grf",
    "sample_offsets",
    "sample_affine",
    "sample_block",
]

# The augmentation pipeline is RGB in, RGB out.
CHANNELS = 3

# Degenerate-field guard for GRF standardization.
_GRF_VAR_GUARD = 1e-12

# Keeps the DC amplitude finite before it is zeroed out.
_GRF_DC_GUARD = 1e-10


@dataclass(frozen=True)
class AugmentConfig:
    """All sampling hyperparameters of the augmentation pipeline.

    ``sigma_w=None`` selects the He default 1/sqrt(k^2 * C_in). The three
    ``enable_*`` switches exist for ablations; defaults are all on.
    """

    kernel_size: int = 3
    l_max: int = 10
    sigma_w: float | None = None
    smooth_bound: float = 1.0
    offset_bound: float = 0.2
    grf_alpha: float = 10.0
    sigma_gamma: float = 0.5
    sigma_beta: float = 0.5
    eps: float = 1e-6
    enable_smoothing: bool = True
    enable_offsets: bool = True
    enable_contrast: bool = True

    def __post_init__(self) -> None:
        k = self.kernel_size
        if k < 1 or k % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 1, got {k}")
        if self.l_max < 1:
            raise ValueError(f"l_max must be >= 1, got {self.l_max}")
        for name in ("smooth_bound", "offset_bound", "grf_alpha", "sigma_gamma", "sigma_beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.sigma_w is not None and self.sigma_w < 0:
            raise ValueError("sigma_w must be non-negative")
        if self.eps <= 0:
            raise ValueError("eps must be positive")

    @property
    def sigma_w_effective(self) -> float:
        if self.sigma_w is not None:
            return self.sigma_w
        return 1.0 / math.sqrt(self.kernel_size**2 * CHANNELS)


@dataclass(frozen=True)
class BlockParams:
    """One sampled convolution block, frozen for a whole mini-batch.

    weights: (C_out, C_in, k, k), already smoothed when smoothing is on.
    offsets: (2*k*k, H, W) pixel displacements shared across channels, or
        None when deformable offsets are disabled.
    gamma/beta: per-output-channel affine contrast parameters, or None when
        contrast diversification is disabled.
    """

    weights: np.ndarray
    offsets: np.ndarray | None = None
    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 4 or w.shape[-1] != w.shape[-2]:
            raise ValueError(f"weights must be (C_out, C_in, k, k), got {w.shape}")
        if w.shape[-1] % 2 == 0:
            raise ValueError("kernel size must be odd")
        if not np.isfinite(w).all():
            raise ValueError("weights contain non-finite values")
        object.__setattr__(self, "weights", w)
        k = w.shape[-1]
        if self.offsets is not None:
            off = np.asarray(self.offsets, dtype=np.float64)
            if off.ndim != 3 or off.shape[0] != 2 * k * k:
                raise ValueError(f"offsets must be (2k^2, H, W) = ({2 * k * k}, H, W), got {off.shape}")
            if not np.isfinite(off).all():
                raise ValueError("offsets contain non-finite values")
            object.__setattr__(self, "offsets", off)
        if (self.gamma is None) != (self.beta is None):
            raise ValueError("gamma and beta must be provided together")
        if self.gamma is not None:
            g = np.asarray(self.gamma, dtype=np.float64)
            b = np.asarray(self.beta, dtype=np.float64)
            if g.shape != (w.shape[0],) or b.shape != (w.shape[0],):
                raise ValueError("gamma/beta must have one entry per output channel")
            object.__setattr__(self, "gamma", g)
            object.__setattr__(self, "beta", b)

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[-1]


def smoothing_mask(k: int, sigma_g: float) -> np.ndarray:
    """Gaussian kernel-smoothing mask g[i, j] = exp(-(i^2 + j^2) / (2 sigma_g^2)).

    (i, j) run over the centered kernel grid; the center entry is exactly 1.
    Small sigma_g collapses the mask toward a one-hot center (a 1x1 kernel),
    large sigma_g approaches all ones (plain k x k kernel).
    """
    if k < 1 or k % 2 == 0:
        raise ValueError(f"k must be odd and >= 1, got {k}")
    if sigma_g <= 0:
        raise ValueError(f"sigma_g must be positive, got {sigma_g}")
    r = (k - 1) // 2
    ax = np.arange(-r, r + 1, dtype=np.float64)
    ii, jj = np.meshgrid(ax, ax, indexing="ij")
    return np.exp(-(ii**2 + jj**2) / (2.0 * sigma_g**2))


def sample_weights(
    cfg: AugmentConfig, rng: RngStream, *, fixed_sigma_g: float | None = None
) -> np.ndarray:
    """Sample (C_out, C_in, k, k) kernel weights from N(0, sigma_w^2).

    With smoothing enabled, one sigma_g ~ U(eps, smooth_bound) is drawn for
    the block and every (k, k) slice is multiplied element-wise by the mask.
    No renormalization is applied afterwards. ``fixed_sigma_g`` pins the
    smoothing scale exactly (visualization sweeps).
    """
    k = cfg.kernel_size
    w = rng.split(0).generator().normal(0.0, cfg.sigma_w_effective, size=(CHANNELS, CHANNELS, k, k))
    if fixed_sigma_g is not None:
        return w * smoothing_mask(k, fixed_sigma_g)
    if cfg.enable_smoothing:
        sigma_g = rng.split(1).generator().uniform(cfg.eps, cfg.smooth_bound)
        w = w * smoothing_mask(k, sigma_g)
    return w


def sample_grf(h: int, w: int, alpha: float, rng: RngStream) -> np.ndarray:
    """Standardized Gaussian random field via spectral synthesis.

    Complex white noise on the (h, w) frequency grid is shaped by the
    amplitude (kx^2 + ky^2)^(-alpha/4) (power spectrum ~ |k|^-alpha), with the
    DC bin removed, then inverse-FFT'd; the real part is standardized to mean
    0 and variance 1. Larger alpha gives stronger spatial correlation;
    alpha = 0 is white noise. A field whose raw variance is degenerate
    (e.g. 1 x 1) comes back all zeros.
    """
    if h < 1 or w < 1:
        raise ValueError("field dims must be >= 1")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    g = rng.generator()
    noise = g.normal(size=(h, w)) + 1j * g.normal(size=(h, w))
    ky = np.fft.fftfreq(h) * h
    kx = np.fft.fftfreq(w) * w
    k2 = ky[:, None] ** 2 + kx[None, :] ** 2
    amplitude = np.power(k2 + _GRF_DC_GUARD, -alpha / 4.0)
    amplitude[0, 0] = 0.0
    field = np.fft.ifft2(noise * amplitude).real
    var = field.var()
    if var < _GRF_VAR_GUARD:
        return np.zeros((h, w))
    return (field - field.mean()) / math.sqrt(var)


def sample_offsets(
    cfg: AugmentConfig,
    h: int,
    w: int,
    rng: RngStream,
    *,
    fixed_sigma_delta: float | None = None,
) -> np.ndarray:
    """Sample the (2k^2, H, W) deformable offset tensor in pixel units.

    One sigma_delta ~ U(eps, offset_bound) scales 2k^2 independent unit-
    variance GRFs; the first k^2 planes are vertical displacements per kernel
    tap (row-major tap order), the last k^2 horizontal. With offsets disabled
    the tensor is all zeros.
    """
    k = cfg.kernel_size
    n_planes = 2 * k * k
    if not cfg.enable_offsets and fixed_sigma_delta is None:
        return np.zeros((n_planes, h, w))
    if fixed_sigma_delta is not None:
        sigma_delta = float(fixed_sigma_delta)
    else:
        sigma_delta = rng.split(0).generator().uniform(cfg.eps, cfg.offset_bound)
    planes = [
        sigma_delta * sample_grf(h, w, cfg.grf_alpha, rng.split(1 + i)) for i in range(n_planes)
    ]
    return np.stack(planes)


def sample_affine(cfg: AugmentConfig, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Sample per-channel contrast parameters gamma ~ N(0, sigma_gamma^2), beta ~ N(0, sigma_beta^2)."""
    g = rng.generator()
    gamma = g.normal(0.0, cfg.sigma_gamma, size=CHANNELS)
    beta = g.normal(0.0, cfg.sigma_beta, size=CHANNELS)
    return gamma, beta


def sample_block(
    cfg: AugmentConfig,
    h: int,
    w: int,
    rng: RngStream,
    *,
    fixed_sigma_g: float | None = None,
    fixed_sigma_delta: float | None = None,
) -> BlockParams:
    """Sample one full convolution block for an (h, w) image batch.

    The four component samplers consume disjoint substreams, so e.g. toggling
    contrast does not change the weights that get drawn.
    """
    weights = sample_weights(cfg, rng.split(0), fixed_sigma_g=fixed_sigma_g)
    offsets = None
    if cfg.enable_offsets or fixed_sigma_delta is not None:
        offsets = sample_offsets(cfg, h, w, rng.split(1), fixed_sigma_delta=fixed_sigma_delta)
    gamma = beta = None
    if cfg.enable_contrast:
        gamma, beta = sample_affine(cfg, rng.split(2))
    return BlockParams(weights=weights, offsets=offsets, gamma=gamma, beta=beta)

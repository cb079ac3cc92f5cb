"""Progressive random convolution augmentation with a desk-scale trainer."""

__version__ = "0.1.0"

from .core import Batch, Image, RngStream, denormalize_u8, gaussian_draw, normalize_u8
from .sampler import (
    AugmentConfig,
    BlockParams,
    sample_affine,
    sample_block,
    sample_grf,
    sample_offsets,
    sample_weights,
    smoothing_mask,
)
from .augment import (
    apply_block,
    contrast_diversify,
    conv2d_direct,
    deform_conv2d,
    progressive_augment,
    progressive_augment_diff,
    randconv_baseline,
    smoothed_randconv_baseline,
    standardize,
)

__all__ = [
    "__version__",
    "Batch",
    "Image",
    "RngStream",
    "normalize_u8",
    "denormalize_u8",
    "gaussian_draw",
    "AugmentConfig",
    "BlockParams",
    "smoothing_mask",
    "sample_weights",
    "sample_grf",
    "sample_offsets",
    "sample_affine",
    "sample_block",
    "conv2d_direct",
    "deform_conv2d",
    "standardize",
    "contrast_diversify",
    "apply_block",
    "progressive_augment",
    "progressive_augment_diff",
    "randconv_baseline",
    "smoothed_randconv_baseline",
]

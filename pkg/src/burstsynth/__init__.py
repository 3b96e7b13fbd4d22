"""Synthetic RAW burst engine.

Generates aligned LR-HR multi-frame super-resolution training pairs from
real multi-exposure RAW captures: sensor noise in the low-resolution burst
frames is carried over sample-for-sample from the originals instead of being
re-synthesised, and inter-frame motion is drawn from empirically measured
handheld trajectories.
"""

from burstsynth.errors import (
    ConfigError,
    DataError,
    DatasetChecksumError,
    DatasetTruncatedError,
    DatasetVersionError,
)
from burstsynth.motion import (
    Homography,
    MotionDataset,
    estimate_dlt,
    load_motion_dataset,
    sample_burst_motion,
    sample_uniform_motion,
    save_motion_dataset,
    trajectory_stats,
)
from burstsynth.raw_core import (
    CfaPattern,
    PackedRaw4,
    RawBayerFrame,
    RgbImage,
    mosaic,
    nn_demosaic,
    nn_downsample_2x,
    normalize,
    pack_raw4,
    read_raw4,
    read_raw16,
    read_rgb16,
    unpack_raw4,
    warp_perspective,
    write_raw4,
    write_raw16,
    write_rgb16,
)
from burstsynth.metrics import ms_ssim, psnr, ssim
from burstsynth.synth_engine import (
    BurstSample,
    NoiseParams,
    extract_patches,
    fuse_exposures,
    read_dataset,
    safety_margin,
    synthesize_baseline,
    synthesize_ours,
    write_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "BurstSample",
    "CfaPattern",
    "ConfigError",
    "DataError",
    "DatasetChecksumError",
    "DatasetTruncatedError",
    "DatasetVersionError",
    "Homography",
    "MotionDataset",
    "NoiseParams",
    "PackedRaw4",
    "RawBayerFrame",
    "RgbImage",
    "estimate_dlt",
    "extract_patches",
    "fuse_exposures",
    "load_motion_dataset",
    "mosaic",
    "ms_ssim",
    "nn_demosaic",
    "nn_downsample_2x",
    "normalize",
    "pack_raw4",
    "psnr",
    "read_dataset",
    "read_raw4",
    "read_raw16",
    "read_rgb16",
    "safety_margin",
    "sample_burst_motion",
    "sample_uniform_motion",
    "save_motion_dataset",
    "ssim",
    "synthesize_baseline",
    "synthesize_ours",
    "trajectory_stats",
    "unpack_raw4",
    "warp_perspective",
    "write_dataset",
    "write_raw4",
    "write_raw16",
    "write_rgb16",
]

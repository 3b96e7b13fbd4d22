"""Toy-scale GAN for multi-frame RAW burst super-resolution.

Consumes datasets produced by the burst-synthesis engine purely through
their on-disk format (packed raw4 frames + rgb16 ground truth under a
checksummed manifest) and trains a generator that aligns, fuses, and 2x
super-resolves the burst.
"""

from mfsr_gan.data import (
    BurstFolder,
    BurstRecord,
    DatasetError,
    load_dataset,
    nn_demosaic_np,
    nn_demosaic_torch,
    unpack_torch,
)
from mfsr_gan.losses import (
    cosine_lr,
    discriminator_loss,
    generator_loss,
    ms_ssim,
    ssim,
)
from mfsr_gan.model import (
    RRDB,
    ChannelAttention,
    ChannelWeights,
    DeformableAligner,
    DenseBlock,
    Discriminator,
    FeatureEnrichment,
    GatedFeedForward,
    Generator,
    MultiFrameAttention,
    Reconstructor,
    SimpleGate,
    rdc,
)
from mfsr_gan.train import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BurstFolder",
    "BurstRecord",
    "ChannelAttention",
    "ChannelWeights",
    "DatasetError",
    "DeformableAligner",
    "DenseBlock",
    "Discriminator",
    "FeatureEnrichment",
    "GatedFeedForward",
    "Generator",
    "MultiFrameAttention",
    "RRDB",
    "Reconstructor",
    "SimpleGate",
    "TrainConfig",
    "cosine_lr",
    "discriminator_loss",
    "generator_loss",
    "load_dataset",
    "ms_ssim",
    "nn_demosaic_np",
    "nn_demosaic_torch",
    "rdc",
    "ssim",
    "train",
    "unpack_torch",
]

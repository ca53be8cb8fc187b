"""Frequency-band single-image deraining.

Learned decomposition of a rainy image into high/mid/low frequency feature
bands, per-band transformer-style enhancement with coarse-to-fine
interaction, multi-scale aggregation, and a reconstruction head — plus the
surrounding harness: DCT band analysis, synthetic rain data, PSNR/SSIM
evaluation, and a seeded training loop.
"""

from .data import (Image, PairedSample, RainSynthesisConfig, augment_flip,
                   load_image, rgb_to_luminance, sample_patch_pair, save_image,
                   synthesize_rain)
from .decompose import BandSet
from .model import (Checkpoint, DerainModel, ModelConfig, PRESETS, VARIANTS,
                    build_model, load_checkpoint, model_from_checkpoint,
                    save_checkpoint)
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Image", "PairedSample", "RainSynthesisConfig", "augment_flip",
    "load_image", "rgb_to_luminance", "sample_patch_pair", "save_image",
    "synthesize_rain", "BandSet", "Checkpoint", "DerainModel", "ModelConfig",
    "PRESETS", "VARIANTS", "build_model", "load_checkpoint",
    "model_from_checkpoint", "save_checkpoint", "TrainConfig", "train",
    "__version__",
]

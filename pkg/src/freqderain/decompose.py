"""Splitting an image into high/mid/low frequency feature bands.

The learned splitter uses strided convolutions and cross-scale subtraction:
a full-resolution conv lifts the input to model width, two shared stride-2
convs build the coarse scales, and each finer band is the residual left
after upsampling the next-coarser scale. The spectral variant replaces the
learned split with a hard DCT band mask per channel (used by the ablation
that swaps convolutional decomposition for a fixed transform).
"""

from __future__ import annotations

from typing import NamedTuple

import torch
from torch import nn

from .bands import dct_matrix, partition_bands
from .errors import ShapeError
from .ops import check_feature_map, upsample_bilinear, resize_bilinear


class BandSet(NamedTuple):
    """Feature bands at full, half, and quarter resolution."""

    high: torch.Tensor
    mid: torch.Tensor
    low: torch.Tensor


def validate_band_set(bands: BandSet) -> None:
    h = bands.high
    check_feature_map(h)
    n, c, height, width = h.shape
    if bands.mid.shape != (n, c, height // 2, width // 2):
        raise ShapeError(f"mid band shape {tuple(bands.mid.shape)} is not half of {tuple(h.shape)}")
    if bands.low.shape != (n, c, height // 4, width // 4):
        raise ShapeError(f"low band shape {tuple(bands.low.shape)} is not quarter of {tuple(h.shape)}")


def _check_divisible(x) -> None:
    check_feature_map(x)
    if x.shape[2] % 4 or x.shape[3] % 4:
        raise ShapeError(
            f"spatial dims must be divisible by 4, got {x.shape[2]}x{x.shape[3]}")


class ConvDecomposer(nn.Module):
    """Learned three-band split via shared strided convolutions."""

    def __init__(self, in_channels: int = 3, channels: int = 16, kernel_size: int = 3):
        super().__init__()
        pad = kernel_size // 2
        self.lift = nn.Conv2d(in_channels, channels, kernel_size, padding=pad)
        self.down1 = nn.Conv2d(channels, channels, kernel_size, stride=2, padding=pad)
        self.down2 = nn.Conv2d(channels, channels, kernel_size, stride=2, padding=pad)

    def forward(self, x) -> BandSet:
        _check_divisible(x)
        full = self.lift(x)
        half = self.down1(full)
        quarter = self.down2(half)
        low = quarter
        mid = half - upsample_bilinear(quarter, 2)
        high = full - upsample_bilinear(half, 2)
        return BandSet(high=high, mid=mid, low=low)


class DctDecomposer(nn.Module):
    """Fixed spectral three-band split behind the same interface.

    A pointwise conv lifts the input to model width; each channel is then
    masked in the orthonormal DCT domain into three complementary bands and
    transformed back. Mid/low reconstructions are bilinearly reduced to the
    half/quarter geometry the rest of the network expects.
    """

    def __init__(self, in_channels: int = 3, channels: int = 16):
        super().__init__()
        self.lift = nn.Conv2d(in_channels, channels, 1)
        self._cache = {}

    def _basis(self, n: int, dtype, device):
        key = (n, dtype)
        if key not in self._cache:
            self._cache[key] = torch.as_tensor(dct_matrix(n), dtype=dtype, device=device)
        return self._cache[key].to(device)

    def _band_masks(self, h: int, w: int, dtype, device):
        key = ("mask", h, w, dtype)
        if key not in self._cache:
            masks = partition_bands(h, w)
            stacked = [torch.as_tensor(m.membership, dtype=dtype, device=device)
                       for m in masks]
            self._cache[key] = stacked  # (low, mid, high)
        return self._cache[key]

    def band_components(self, x):
        """Full-resolution (high, mid, low) reconstructions of the lifted input."""
        _check_divisible(x)
        lifted = self.lift(x)
        h, w = lifted.shape[2], lifted.shape[3]
        dh = self._basis(h, lifted.dtype, lifted.device)
        dw = self._basis(w, lifted.dtype, lifted.device)
        spectrum = dh @ lifted @ dw.T
        low_m, mid_m, high_m = self._band_masks(h, w, lifted.dtype, lifted.device)
        recon = lambda m: dh.T @ (spectrum * m) @ dw
        return recon(high_m), recon(mid_m), recon(low_m)

    def forward(self, x) -> BandSet:
        high, mid, low = self.band_components(x)
        h, w = high.shape[2], high.shape[3]
        return BandSet(
            high=high,
            mid=resize_bilinear(mid, (h // 2, w // 2)),
            low=resize_bilinear(low, (h // 4, w // 4)),
        )

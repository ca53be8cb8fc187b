"""Fusing enhanced bands back into one full-resolution feature map.

The merger lifts all bands to full resolution and projects the channel
concat down to model width. Fusion blocks then mix multi-scale context:
the normalized input is split along channels, each split is filtered
depthwise at its own scale, max-pool pyramids add non-local summaries, and
a zero-initialized pointwise conv folds everything back onto a residual
path (so each block starts as the identity).
"""

from __future__ import annotations

import torch
from torch import nn

from .decompose import BandSet, validate_band_set
from .errors import ConfigError
from .ops import LayerNorm2d, adaptive_max_pool, gelu, resize_bilinear, upsample_bilinear


class BandMerger(nn.Module):
    """Concat up4(low), up2(mid), high along channels; project back to C."""

    def __init__(self, channels: int):
        super().__init__()
        self.project = nn.Conv2d(3 * channels, channels, 1)

    def forward(self, bands: BandSet):
        validate_band_set(bands)
        stacked = torch.cat(
            [bands.high, upsample_bilinear(bands.mid, 2), upsample_bilinear(bands.low, 4)],
            dim=1)
        return self.project(stacked)


class MultiScaleBlock(nn.Module):
    """Channel-split multi-scale mixing with a residual, identity at init."""

    def __init__(self, channels: int, splits: int = 4, scales=(2, 4, 8)):
        super().__init__()
        if channels % splits:
            raise ConfigError(f"channels ({channels}) must be divisible by splits ({splits})")
        if len(scales) != splits - 1:
            raise ConfigError(f"need {splits - 1} scales for {splits} splits, got {len(scales)}")
        self.splits = splits
        self.scales = tuple(scales)
        group = channels // splits
        self.group_convs = nn.ModuleList(
            nn.Conv2d(group, group, 3, padding=1, groups=group)
            for _ in range(splits))
        self.norm = LayerNorm2d(channels)
        self.fuse = nn.Conv2d(channels + len(self.scales) * channels, channels, 1)
        nn.init.zeros_(self.fuse.weight)
        nn.init.zeros_(self.fuse.bias)

    @staticmethod
    def _target(dim: int, scale: int) -> int:
        return max(1, -(-dim // scale))

    def _group_features(self, y):
        """Per-split filtered features, in channel order (testing hook)."""
        h, w = y.shape[2], y.shape[3]
        groups = y.chunk(self.splits, dim=1)
        feats = [self.group_convs[0](groups[0])]
        for grp, conv, s in zip(groups[1:], list(self.group_convs)[1:], self.scales):
            th, tw = self._target(h, s), self._target(w, s)
            scaled = conv(resize_bilinear(grp, (th, tw)))
            feats.append(resize_bilinear(scaled, (h, w)) if (th, tw) != (h, w) else scaled)
        return feats

    def forward(self, x):
        h, w = x.shape[2], x.shape[3]
        y = self.norm(x)
        feats = self._group_features(y)
        pooled = []
        for s in self.scales:
            th, tw = self._target(h, s), self._target(w, s)
            p = adaptive_max_pool(y, th, tw)
            pooled.append(resize_bilinear(p, (h, w)) if (th, tw) != (h, w) else p)
        fused = gelu(self.fuse(torch.cat(feats + pooled, dim=1)))
        return fused + x


class BandAggregator(nn.Module):
    """Merge bands, then refine with a stack of multi-scale blocks."""

    def __init__(self, channels: int, splits: int = 4, scales=(2, 4, 8), depth: int = 1):
        super().__init__()
        if depth < 1:
            raise ConfigError("depth must be at least 1")
        self.merge = BandMerger(channels)
        self.blocks = nn.Sequential(
            *(MultiScaleBlock(channels, splits, scales) for _ in range(depth)))

    def forward(self, bands: BandSet):
        return self.blocks(self.merge(bands))

"""Per-band feature enhancement and cross-band interaction.

Each band runs through a stack of transformer-style blocks: channel-wise
transposed attention (self-attention over channels, so the attention matrix
is C x C rather than HW x HW) followed by a gated depthwise feed-forward
network. Bands then interact coarse-to-fine: the enhanced lower band is
upsampled, combined into the next band, and refined by a multi-scale
sigmoid gate.

Residual-exit projections (attention output, feed-forward output, the gate's
final conv) are initialized so every block starts as the identity map.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from einops import rearrange
from torch import nn

from .decompose import BandSet
from .errors import ConfigError
from .ops import LayerNorm2d, adaptive_max_pool, gelu, resize_bilinear, upsample_bilinear

COMBINE_MODES = ("concat_project", "multiply")

# sigmoid(15) differs from 1 by ~3e-7, so the gate opens as identity.
GATE_BIAS_INIT = 15.0


@dataclass
class EnhancerConfig:
    channels: int
    heads: int = 2
    expansion: float = 2.66
    blocks_per_band: int = 4

    def __post_init__(self):
        if self.channels % self.heads:
            raise ConfigError(
                f"channels ({self.channels}) must be divisible by heads ({self.heads})")
        if self.expansion <= 1:
            raise ConfigError("expansion must exceed 1")
        if self.blocks_per_band < 1:
            raise ConfigError("blocks_per_band must be positive")


class ChannelAttention(nn.Module):
    """Transposed self-attention over channels with a learnable temperature."""

    def __init__(self, channels: int, heads: int):
        super().__init__()
        if channels % heads:
            raise ConfigError(f"channels ({channels}) must be divisible by heads ({heads})")
        self.heads = heads
        self.alpha = nn.Parameter(torch.ones(heads, 1, 1))
        self.qkv = nn.Conv2d(channels, channels * 3, 1, bias=False)
        self.qkv_dw = nn.Conv2d(channels * 3, channels * 3, 3, padding=1,
                                groups=channels * 3, bias=False)
        self.proj = nn.Conv2d(channels, channels, 1, bias=False)
        nn.init.zeros_(self.proj.weight)

    def attention_matrix(self, x):
        """Row-stochastic (heads, C_h, C_h) map, exposed for inspection."""
        return self._attend(x)[1]

    def _attend(self, x):
        h, w = x.shape[2], x.shape[3]
        q, k, v = self.qkv_dw(self.qkv(x)).chunk(3, dim=1)
        q = rearrange(q, "n (hd c) h w -> n hd (h w) c", hd=self.heads)
        k = rearrange(k, "n (hd c) h w -> n hd c (h w)", hd=self.heads)
        v = rearrange(v, "n (hd c) h w -> n hd (h w) c", hd=self.heads)
        scores = (k @ q) / self.alpha
        attn = torch.softmax(scores, dim=-1)
        out = v @ attn
        out = rearrange(out, "n hd (h w) c -> n (hd c) h w", h=h, w=w)
        return out, attn

    def forward(self, x):
        out, _ = self._attend(x)
        return self.proj(out) + x


class GatedFeedForward(nn.Module):
    """Two-branch gated feed-forward with depthwise convs and GELU gate."""

    def __init__(self, channels: int, expansion: float = 2.66):
        super().__init__()
        hidden = round(channels * expansion)
        self.norm = LayerNorm2d(channels)
        self.pw_gate = nn.Conv2d(channels, hidden, 1, bias=False)
        self.dw_gate = nn.Conv2d(hidden, hidden, 3, padding=1, groups=hidden, bias=False)
        self.pw_value = nn.Conv2d(channels, hidden, 1, bias=False)
        self.dw_value = nn.Conv2d(hidden, hidden, 3, padding=1, groups=hidden, bias=False)
        self.out = nn.Conv2d(hidden, channels, 1, bias=False)
        nn.init.zeros_(self.out.weight)

    def forward(self, x):
        y = self.norm(x)
        gated = gelu(self.dw_gate(self.pw_gate(y))) * self.dw_value(self.pw_value(y))
        return self.out(gated) + x


class PyramidGate(nn.Module):
    """Multi-scale max-pool features squashed into a sigmoid channel gate.

    scale s pools the input to roughly (H/s, W/s), filters it depthwise, and
    is resized back; the summed pyramid feeds a pointwise conv whose zero
    weight / large positive bias makes the gate open (== identity) at init.
    Inputs smaller than 4 px fall back to scales (1, 2).
    """

    def __init__(self, channels: int, scales=(1, 2, 4)):
        super().__init__()
        self.scales = tuple(scales)
        self.filters = nn.ModuleList(
            nn.Conv2d(channels, channels, 3, padding=1, groups=channels)
            for _ in self.scales)
        self.squash = nn.Conv2d(channels, channels, 1)
        nn.init.zeros_(self.squash.weight)
        nn.init.constant_(self.squash.bias, GATE_BIAS_INIT)

    def gate(self, x):
        h, w = x.shape[2], x.shape[3]
        scales = self.scales if min(h, w) >= 4 else (1, 2)
        summed = None
        for s, conv in zip(self.scales, self.filters):
            if s not in scales:
                continue
            pooled = adaptive_max_pool(x, max(1, -(-h // s)), max(1, -(-w // s)))
            feat = conv(pooled)
            if feat.shape[2:] != (h, w):
                feat = resize_bilinear(feat, (h, w))
            summed = feat if summed is None else summed + feat
        return torch.sigmoid(self.squash(summed))

    def forward(self, x):
        return x * self.gate(x)


class BandEnhancer(nn.Module):
    """Sequential (attention -> gated feed-forward) blocks, shape preserving."""

    def __init__(self, cfg: EnhancerConfig):
        super().__init__()
        layers = []
        for _ in range(cfg.blocks_per_band):
            layers.append(ChannelAttention(cfg.channels, cfg.heads))
            layers.append(GatedFeedForward(cfg.channels, cfg.expansion))
        self.blocks = nn.Sequential(*layers)

    def forward(self, x):
        return self.blocks(x)


class BandInteraction(nn.Module):
    """Enhance each band, feeding enhanced coarse bands into finer ones.

    low is enhanced alone; mid and high are combined with the upsampled
    output of the previous (coarser) stage, either by channel concat plus
    projection or by elementwise multiply, then gated by the pyramid gate.
    """

    def __init__(self, cfg: EnhancerConfig, combine: str = "concat_project"):
        super().__init__()
        if combine not in COMBINE_MODES:
            raise ConfigError(f"combine must be one of {COMBINE_MODES}, got {combine!r}")
        self.combine = combine
        self.enhance_low = BandEnhancer(cfg)
        self.enhance_mid = BandEnhancer(cfg)
        self.enhance_high = BandEnhancer(cfg)
        c = cfg.channels
        if combine == "concat_project":
            self.project_mid = nn.Conv2d(2 * c, c, 1)
            self.project_high = nn.Conv2d(2 * c, c, 1)
        self.gate_mid = PyramidGate(c)
        self.gate_high = PyramidGate(c)

    def _combine(self, enhanced, coarse_up, project):
        if self.combine == "multiply":
            return enhanced * coarse_up
        return project(torch.cat([enhanced, coarse_up], dim=1))

    def forward(self, bands: BandSet) -> BandSet:
        low = self.enhance_low(bands.low)
        mid = self.gate_mid(self._combine(
            self.enhance_mid(bands.mid), upsample_bilinear(low, 2),
            getattr(self, "project_mid", None)))
        high = self.gate_high(self._combine(
            self.enhance_high(bands.high), upsample_bilinear(mid, 2),
            getattr(self, "project_high", None)))
        return BandSet(high=high, mid=mid, low=low)


class IndependentBands(nn.Module):
    """Per-band enhancement with no cross-band flow (the no-interaction ablation)."""

    def __init__(self, cfg: EnhancerConfig):
        super().__init__()
        self.enhance_low = BandEnhancer(cfg)
        self.enhance_mid = BandEnhancer(cfg)
        self.enhance_high = BandEnhancer(cfg)

    def forward(self, bands: BandSet) -> BandSet:
        return BandSet(
            high=self.enhance_high(bands.high),
            mid=self.enhance_mid(bands.mid),
            low=self.enhance_low(bands.low),
        )

"""Differentiable building blocks with pinned numeric conventions.

Everything the network needs, delegated to torch but with the conventions
fixed here so results stay portable:

- conv2d: zero padding, "same" geometry ((k-1)/2 for odd k); strided output
  is ceil(H/stride) x ceil(W/stride).
- bilinear resizing: half-pixel centers (align_corners disabled).
- adaptive max pooling: contiguous windows that tile the input.
- layer norm: per (batch, position) channel vector, population variance.

Gradients come from autograd; tests hold every op to a central
finite-difference check.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ShapeError


def check_feature_map(x: torch.Tensor) -> None:
    if x.ndim != 4:
        raise ShapeError(f"expected a rank-4 (N, C, H, W) tensor, got shape {tuple(x.shape)}")
    if min(x.shape) < 1:
        raise ShapeError(f"all dims must be >= 1, got {tuple(x.shape)}")


def conv2d(x, weight, bias=None, stride=1, groups=1):
    """Same-padded convolution; stride 2 halves dims with ceil rounding."""
    check_feature_map(x)
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    k = weight.shape[-1]
    if weight.shape[-2] != k or k % 2 == 0:
        raise ValueError(f"kernel must be square with odd size, got {tuple(weight.shape[-2:])}")
    if weight.shape[1] * groups != x.shape[1]:
        raise ShapeError(
            f"kernel expects {weight.shape[1] * groups} input channels, got {x.shape[1]}")
    return F.conv2d(x, weight, bias, stride=stride, padding=k // 2, groups=groups)


def upsample_bilinear(x, factor: int):
    """Bilinear x2 or x4 upsampling, half-pixel convention."""
    check_feature_map(x)
    if factor not in (2, 4):
        raise ValueError(f"factor must be 2 or 4, got {factor}")
    return F.interpolate(x, scale_factor=factor, mode="bilinear", align_corners=False)


def resize_bilinear(x, size):
    """Bilinear resize to an exact (h, w), same convention as upsampling."""
    check_feature_map(x)
    return F.interpolate(x, size=tuple(size), mode="bilinear", align_corners=False)


def layer_norm(x, gain, offset, eps: float = 1e-5):
    """Normalize each position's channel vector, then scale/shift per channel."""
    check_feature_map(x)
    mu = x.mean(dim=1, keepdim=True)
    var = x.var(dim=1, keepdim=True, unbiased=False)
    y = (x - mu) / torch.sqrt(var + eps)
    return y * gain.view(1, -1, 1, 1) + offset.view(1, -1, 1, 1)


def softmax(x, axis: int):
    return torch.softmax(x, dim=axis)


def gelu(x):
    return F.gelu(x)


def adaptive_max_pool(x, out_h: int, out_w: int):
    """Max over contiguous windows tiling the input."""
    check_feature_map(x)
    if out_h > x.shape[2] or out_w > x.shape[3]:
        raise ValueError(
            f"output {out_h}x{out_w} exceeds input {x.shape[2]}x{x.shape[3]}")
    return F.adaptive_max_pool2d(x, (out_h, out_w))


def backward(output, wrt, cotangent):
    """Gradients of <output, cotangent> w.r.t. the given tensors."""
    if output.shape != cotangent.shape:
        raise ShapeError("cotangent must match the output shape")
    return torch.autograd.grad(output, wrt, grad_outputs=cotangent, allow_unused=False)


def set_deterministic(enabled: bool = True) -> None:
    """Fixed-algorithm mode so repeated runs reduce identically."""
    torch.use_deterministic_algorithms(enabled)


class LayerNorm2d(nn.Module):
    """Channel layer norm over (N, C, H, W) with learnable gain/offset."""

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.gain = nn.Parameter(torch.ones(channels))
        self.offset = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x):
        return layer_norm(x, self.gain, self.offset, self.eps)

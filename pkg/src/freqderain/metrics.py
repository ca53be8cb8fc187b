"""Fidelity metrics on the luminance channel.

PSNR uses a fixed data range of 255 regardless of the stored value range.
SSIM is the single-scale reference formulation: 11x11 Gaussian window with
sigma 1.5, K1=0.01, K2=0.03, L=255, averaged over valid window positions.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
from scipy.signal import convolve2d

from .data import Image, rgb_to_luminance
from .errors import ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DATA_RANGE = 255.0


def _luma255(img: Image) -> np.ndarray:
    return rgb_to_luminance(img.to_byte())


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical inputs."""
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeError(f"dimensions differ: {a.height}x{a.width} vs {b.height}x{b.width}")
    mse = float(np.mean((_luma255(a) - _luma255(b)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DATA_RANGE ** 2 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    coords = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(a: Image, b: Image) -> float:
    """Mean structural similarity over valid window positions."""
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeError(f"dimensions differ: {a.height}x{a.width} vs {b.height}x{b.width}")
    if min(a.height, a.width) < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    x = _luma255(a)
    y = _luma255(b)
    win = gaussian_window()
    c1 = (SSIM_K1 * DATA_RANGE) ** 2
    c2 = (SSIM_K2 * DATA_RANGE) ** 2
    filt = lambda z: convolve2d(z, win, mode="valid")
    mu_x, mu_y = filt(x), filt(y)
    var_x = filt(x * x) - mu_x ** 2
    var_y = filt(y * y) - mu_y ** 2
    cov = filt(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def write_metrics_csv(path, names, psnrs, ssims) -> None:
    """Per-image rows plus a MEAN row: name, psnr, ssim."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "psnr", "ssim"])
        for name, p, s in zip(names, psnrs, ssims):
            writer.writerow([name, f"{p:.6f}", f"{s:.6f}"])
        writer.writerow(["MEAN", f"{float(np.mean(psnrs)):.6f}",
                         f"{float(np.mean(ssims)):.6f}"])

"""DCT frequency-band analysis of rainy/clean pairs.

The spectrum of an H x W luminance image is split into low/mid/high bands by
the normalized anti-diagonal rule: coefficient (u, v) is low when
(u/H + v/W)/2 < 1/3, mid when < 2/3, high otherwise. Band energy is read off
the rainy image; band MSE is the per-coefficient squared spectral difference
of the pair. Both choices are recorded in the CSV header so emitted results
are self-describing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from scipy.fft import dctn, idctn

from .data import PairedSample, rgb_to_luminance
from .errors import ShapeError

BAND_NAMES = ("low", "mid", "high")
LOW_EDGE = 1.0 / 3.0
HIGH_EDGE = 2.0 / 3.0


@dataclass
class BandMask:
    band: str
    membership: np.ndarray  # boolean over DCT coefficient indices


@dataclass
class BandStats:
    energy_low: float
    energy_mid: float
    energy_high: float
    mse_low: float
    mse_mid: float
    mse_high: float

    def as_row(self) -> list[float]:
        return [getattr(self, f.name) for f in fields(self)]


def dct2(x: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D type-II DCT (energy preserving, inverted by idct2)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ShapeError(f"dct2 expects a 2-D array, got shape {x.shape}")
    return dctn(x, type=2, norm="ortho")


def idct2(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2:
        raise ShapeError(f"idct2 expects a 2-D array, got shape {c.shape}")
    return idctn(c, type=2, norm="ortho")


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis matrix D with dct(x) = D @ x."""
    if n < 1:
        raise ValueError("n must be positive")
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    mat[0, :] = np.sqrt(1.0 / n)
    return mat


def partition_bands(h: int, w: int) -> tuple[BandMask, BandMask, BandMask]:
    """Disjoint, exhaustive low/mid/high masks over the (h, w) DCT grid."""
    if h < 3 or w < 3:
        raise ValueError(f"band partition needs dims >= 3, got {h}x{w}")
    q = (np.arange(h)[:, None] / h + np.arange(w)[None, :] / w) / 2.0
    low = q < LOW_EDGE
    mid = (~low) & (q < HIGH_EDGE)
    high = ~(low | mid)
    return (BandMask("low", low), BandMask("mid", mid), BandMask("high", high))


def analyze_pair(pair: PairedSample) -> BandStats:
    """Per-band spectral energy (rainy) and spectral MSE (rainy vs clean)."""
    rainy_y = rgb_to_luminance(pair.rainy)
    clean_y = rgb_to_luminance(pair.clean)
    if rainy_y.shape != clean_y.shape:
        raise ShapeError("pair members differ in shape")
    c_rainy = dct2(rainy_y)
    c_clean = dct2(clean_y)
    sq_err = (c_rainy - c_clean) ** 2
    energy = c_rainy ** 2
    masks = partition_bands(*rainy_y.shape)
    vals = {}
    for mask in masks:
        m = mask.membership
        vals[f"energy_{mask.band}"] = float(energy[m].sum())
        vals[f"mse_{mask.band}"] = float(sq_err[m].mean())
    return BandStats(**vals)


def mean_stats(stats: list[BandStats]) -> BandStats:
    arr = np.array([s.as_row() for s in stats])
    return BandStats(*arr.mean(axis=0))


def analyze_corpus(pairs) -> tuple[list[BandStats], BandStats]:
    """Per-pair stats in input order plus their mean."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("analyze_corpus needs at least one pair")
    per_pair = [analyze_pair(p) for p in pairs]
    return per_pair, mean_stats(per_pair)


CSV_HEADER = ["name", "energy_low", "energy_mid", "energy_high",
              "mse_low", "mse_mid", "mse_high"]


def write_band_csv(path, names, per_pair: list[BandStats], mean: BandStats) -> None:
    """Band-stats CSV: leading '#' metadata lines, one row per pair, MEAN last."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# band thresholds: low < {LOW_EDGE:.6f} <= mid < {HIGH_EDGE:.6f} <= high"
                 " on (u/H + v/W)/2\n")
        fh.write("# energy measured on the rainy image; mse between rainy and clean spectra\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for name, stats in zip(names, per_pair):
            writer.writerow([name] + [f"{v:.10g}" for v in stats.as_row()])
        writer.writerow(["MEAN"] + [f"{v:.10g}" for v in mean.as_row()])


def plot_band_summary(path, mean: BandStats) -> None:
    """Cosmetic bar chart of mean band energy and MSE."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(7, 3))
    energies = [mean.energy_low, mean.energy_mid, mean.energy_high]
    errors = [mean.mse_low, mean.mse_mid, mean.mse_high]
    axes[0].bar(BAND_NAMES, energies, color="#4477aa")
    axes[0].set_title("band energy (rainy)")
    axes[1].bar(BAND_NAMES, errors, color="#cc6677")
    axes[1].set_title("band MSE (rainy vs clean)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

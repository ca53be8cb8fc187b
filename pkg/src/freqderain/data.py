"""Image I/O, paired datasets, patch sampling, flips, and synthetic rain.

Images travel as float arrays with an explicit value range: "byte" ([0, 255])
at file boundaries, "unit" ([0, 1]) everywhere compute happens. All random
operations are pure functions of their inputs and an integer seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError
from scipy.ndimage import gaussian_filter

from .errors import DecodeError, ShapeError

VALUE_RANGES = ("unit", "byte")

# Luminance weights (ITU-R BT.601), the Y-channel convention of the common
# deraining evaluation protocol.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# Streak rendering constants. Streaks are drawn as period-2 dash chains and
# the layer is given a faint dark halo (local contrast loss around the
# droplet chain). Both keep the streak energy in the jointly-high band of
# the DCT partition, which is what makes streak and veil degradations
# separable in band statistics.
_HALO_WEIGHT = 0.7
_HALO_SIGMA = 1.5


@dataclass
class Image:
    """H x W x 3 pixel raster with a declared value range."""

    pixels: np.ndarray
    value_range: str = "byte"

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ShapeError(f"expected HxWx3 pixels, got shape {self.pixels.shape}")
        if self.height < 1 or self.width < 1:
            raise ShapeError("image must be at least 1x1")
        if self.value_range not in VALUE_RANGES:
            raise ValueError(f"value_range must be one of {VALUE_RANGES}")
        hi = 1.0 if self.value_range == "unit" else 255.0
        if self.pixels.min() < -1e-9 or self.pixels.max() > hi + 1e-9:
            raise ValueError(
                f"pixels escape declared {self.value_range} range "
                f"[{self.pixels.min():.4g}, {self.pixels.max():.4g}]"
            )

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def to_unit(self) -> "Image":
        if self.value_range == "unit":
            return self
        return Image(self.pixels / 255.0, "unit")

    def to_byte(self) -> "Image":
        if self.value_range == "byte":
            return self
        return Image(self.pixels * 255.0, "byte")


@dataclass
class PairedSample:
    """A rainy/clean image pair with matching geometry and range."""

    rainy: Image
    clean: Image

    def __post_init__(self):
        if self.rainy.pixels.shape != self.clean.pixels.shape:
            raise ShapeError(
                f"pair dimensions differ: {self.rainy.pixels.shape} vs "
                f"{self.clean.pixels.shape}"
            )
        if self.rainy.value_range != self.clean.value_range:
            raise ValueError("pair members must share a value range")


@dataclass
class RainSynthesisConfig:
    streak_count: int = 60
    streak_length_px: int = 14
    streak_angle_deg: float = 40.0
    streak_intensity: float = 0.35
    accumulation_sigma: float = 10.0
    accumulation_strength: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.streak_count < 0:
            raise ValueError("streak_count must be nonnegative")
        if self.streak_length_px < 1:
            raise ValueError("streak_length_px must be positive")
        if not 0.0 <= self.streak_intensity <= 1.0:
            raise ValueError("streak_intensity must lie in [0, 1]")
        if self.accumulation_sigma < 0:
            raise ValueError("accumulation_sigma must be nonnegative")
        if not 0.0 <= self.accumulation_strength <= 1.0:
            raise ValueError("accumulation_strength must lie in [0, 1]")


def load_image(path) -> Image:
    """Read an 8-bit RGB PNG into a byte-range Image."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such image: {path}")
    try:
        with PILImage.open(path) as im:
            if im.format != "PNG":
                raise DecodeError(f"{path}: expected PNG, got {im.format}")
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"{path}: not a decodable PNG") from exc
    return Image(arr, "byte")


def save_image(img: Image, path) -> None:
    """Write an Image as an 8-bit RGB PNG (unit inputs are quantized)."""
    arr = img.to_byte().pixels
    arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(arr, mode="RGB").save(path, format="PNG")


def rgb_to_luminance(img: Image) -> np.ndarray:
    """BT.601 luminance, same value range as the input."""
    return img.pixels @ LUMA_WEIGHTS


def _streak_layer(h, w, cfg: RainSynthesisConfig, rng) -> np.ndarray:
    layer = np.zeros((h, w))
    theta = np.deg2rad(cfg.streak_angle_deg)
    dx, dy = np.sin(theta), np.cos(theta)
    for _ in range(cfg.streak_count):
        x0 = rng.uniform(0, w)
        y0 = rng.uniform(0, h)
        for t in range(0, cfg.streak_length_px, 2):
            x = int(round(x0 + t * dx))
            y = int(round(y0 + t * dy))
            if 0 <= x < w and 0 <= y < h:
                layer[y, x] += cfg.streak_intensity
    if layer.any():
        layer = layer - _HALO_WEIGHT * gaussian_filter(layer, _HALO_SIGMA)
    return layer


def _accumulation_layer(h, w, cfg: RainSynthesisConfig, rng) -> np.ndarray:
    if cfg.accumulation_strength == 0.0:
        return np.zeros((h, w))
    noise = rng.uniform(0.0, 1.0, size=(h, w))
    veil = gaussian_filter(noise, cfg.accumulation_sigma) if cfg.accumulation_sigma > 0 else noise
    return cfg.accumulation_strength * veil


def synthesize_rain(clean: Image, cfg: RainSynthesisConfig) -> PairedSample:
    """Degrade a unit-range clean image with streaks and a brightness veil.

    rainy = clip(clean + streaks + veil, 0, 1). Deterministic in cfg.seed; the
    streak order consumes the RNG before the veil so the two layers are
    individually reproducible.
    """
    if clean.value_range != "unit":
        raise ValueError("synthesize_rain expects a unit-range clean image")
    h, w = clean.height, clean.width
    rng = np.random.default_rng(cfg.seed)
    layer = _streak_layer(h, w, cfg, rng) + _accumulation_layer(h, w, cfg, rng)
    rainy = np.clip(clean.pixels + layer[:, :, None], 0.0, 1.0)
    return PairedSample(rainy=Image(rainy, "unit"), clean=clean)


def sample_patch_pair(pair: PairedSample, size: int, seed: int) -> PairedSample:
    """Co-located square crop at a uniformly random position."""
    h, w = pair.rainy.height, pair.rainy.width
    if size > min(h, w):
        raise ValueError(f"patch size {size} exceeds image dims {h}x{w}")
    rng = np.random.default_rng(seed)
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    crop = lambda im: Image(im.pixels[top:top + size, left:left + size], im.value_range)
    return PairedSample(rainy=crop(pair.rainy), clean=crop(pair.clean))


def augment_flip(pair: PairedSample, flip_h: bool, flip_v: bool) -> PairedSample:
    """Flip both members identically; applying the same flags twice is a no-op."""

    def flip(im: Image) -> Image:
        px = im.pixels
        if flip_h:
            px = px[:, ::-1]
        if flip_v:
            px = px[::-1, :]
        return Image(px.copy(), im.value_range)

    return PairedSample(rainy=flip(pair.rainy), clean=flip(pair.clean))


def generate_clean_image(seed: int, height: int = 96, width: int = 96) -> Image:
    """Procedural rain-free content: gradients, soft shapes, light texture."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    base = 0.45 + 0.25 * np.sin(
        2 * np.pi * (rng.uniform(0.5, 2.0) * xx / width + rng.uniform())
    ) * np.cos(2 * np.pi * (rng.uniform(0.5, 2.0) * yy / height + rng.uniform()))
    img = np.repeat(base[:, :, None], 3, axis=2)
    img += rng.uniform(-0.08, 0.08, size=3)[None, None, :]
    max_r = max(3.0, min(height, width) / 3)
    for _ in range(rng.integers(3, 7)):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        if rng.uniform() < 0.5:
            r = rng.uniform(2, max_r)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r ** 2
        else:
            hh, ww = rng.uniform(2, max(3, height / 2)), rng.uniform(2, max(3, width / 2))
            mask = (np.abs(yy - cy) < hh / 2) & (np.abs(xx - cx) < ww / 2)
        img += mask[:, :, None] * rng.uniform(-0.3, 0.3, size=3)[None, None, :]
    img += 0.015 * rng.standard_normal((height, width, 1))
    return Image(np.clip(img, 0.02, 0.98), "unit")


def derive_rain_config(seed: int) -> RainSynthesisConfig:
    """Per-image rain parameters, varied but reproducible from one seed."""
    rng = np.random.default_rng(seed)
    return RainSynthesisConfig(
        streak_count=int(rng.integers(50, 130)),
        streak_length_px=int(rng.integers(8, 20)),
        streak_angle_deg=float(rng.uniform(20, 70) * rng.choice([-1.0, 1.0])),
        streak_intensity=float(rng.uniform(0.25, 0.5)),
        accumulation_sigma=float(rng.uniform(6, 14)),
        accumulation_strength=float(rng.uniform(0.05, 0.25)),
        seed=int(rng.integers(0, 2 ** 31)),
    )


def make_synthetic_dataset(root, count: int, seed: int, height: int = 96,
                           width: int = 96, rain: RainSynthesisConfig | None = None):
    """Write `count` synthetic pairs under <root>/rainy and <root>/clean.

    With rain=None every pair gets its own derived rain parameters; passing a
    config applies it verbatim (only the seed varies per pair).
    """
    root = Path(root)
    names = []
    for i in range(count):
        clean = generate_clean_image(seed=seed * 100003 + i, height=height, width=width)
        cfg = derive_rain_config(seed * 7919 + i) if rain is None else replace(
            rain, seed=seed * 7919 + i)
        pair = synthesize_rain(clean, cfg)
        name = f"sample_{i:04d}"
        save_image(pair.rainy, root / "rainy" / f"{name}.png")
        save_image(pair.clean, root / "clean" / f"{name}.png")
        names.append(name)
    return names


def list_pair_stems(root) -> list[str]:
    """Stems present in both <root>/rainy and <root>/clean, sorted."""
    root = Path(root)
    rainy_dir, clean_dir = root / "rainy", root / "clean"
    if not rainy_dir.is_dir() or not clean_dir.is_dir():
        raise FileNotFoundError(f"expected {rainy_dir} and {clean_dir} directories")
    rainy = {p.stem for p in rainy_dir.glob("*.png")}
    clean = {p.stem for p in clean_dir.glob("*.png")}
    unmatched = rainy ^ clean
    if unmatched:
        raise FileNotFoundError(
            f"unmatched stems under {root}: {sorted(unmatched)}")
    return sorted(rainy)


def load_pair(root, stem: str, unit: bool = True) -> PairedSample:
    root = Path(root)
    rainy = load_image(root / "rainy" / f"{stem}.png")
    clean = load_image(root / "clean" / f"{stem}.png")
    if unit:
        rainy, clean = rainy.to_unit(), clean.to_unit()
    return PairedSample(rainy=rainy, clean=clean)


def load_paired_dataset(root, unit: bool = True):
    """All pairs under the rainy/clean layout, ordered by stem."""
    stems = list_pair_stems(root)
    return stems, [load_pair(root, s, unit=unit) for s in stems]

"""The deraining network, its ablation variants, and checkpoint I/O.

Full pipeline: band decomposition -> per-band enhancement with coarse-to-fine
interaction -> band aggregation -> 3x3 reconstruction head. The head is
zero-initialized and by default adds its output to the input image, so a
fresh model is the identity map.

Variants (ablation switches):
  full  learned conv decomposition, interaction, multi-scale aggregation
  S1    no decomposition: one full-resolution enhancement branch
  S2    conv decomposition swapped for the fixed DCT split
  S3    no cross-band interaction: bands enhanced independently
  S4    aggregation reduced to channel concat + pointwise projection

Checkpoints are a single binary file: magic, version, canonical-JSON config,
step counter, RNG state blob, parameter table (name, shape, little-endian
float32 data) sorted by name, and a trailing SHA-256 of everything before it.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .aggregate import BandAggregator, BandMerger, MultiScaleBlock
from .decompose import BandSet, ConvDecomposer, DctDecomposer
from .enhance import BandEnhancer, BandInteraction, EnhancerConfig, IndependentBands
from .errors import ConfigError, CorruptCheckpoint, VersionError

VARIANTS = ("full", "S1", "S2", "S3", "S4")

CHECKPOINT_MAGIC = b"FQDR"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    channels: int = 16
    heads: int = 2
    expansion: float = 2.66
    blocks_per_band: int = 2
    combine: str = "concat_project"
    fam_splits: int = 4
    fam_scales: tuple = (2, 4, 8)
    fam_depth: int = 1
    variant: str = "full"
    global_residual: bool = True

    def __post_init__(self):
        self.fam_scales = tuple(self.fam_scales)
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.channels < 1:
            raise ConfigError("channels must be positive")
        # surface component constraint violations at config time
        EnhancerConfig(self.channels, self.heads, self.expansion, self.blocks_per_band)
        if self.channels % self.fam_splits:
            raise ConfigError(
                f"channels ({self.channels}) must be divisible by fam_splits ({self.fam_splits})")
        if len(self.fam_scales) != self.fam_splits - 1:
            raise ConfigError("fam_scales length must be fam_splits - 1")

    def enhancer(self) -> EnhancerConfig:
        return EnhancerConfig(self.channels, self.heads, self.expansion, self.blocks_per_band)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fam_scales"] = list(self.fam_scales)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


# Desk preset is what the test-suite budget affords; the large preset is the
# full training width and is never exercised by tests.
PRESETS = {
    "desk": ModelConfig(channels=16, blocks_per_band=2, fam_depth=1),
    "large": ModelConfig(channels=128, blocks_per_band=4, fam_depth=2),
}


class DerainModel(nn.Module):
    """Rainy RGB in, derained RGB out, unit range, any dims (padded to /4)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        c = cfg.channels
        if cfg.variant == "S1":
            self.stem = nn.Conv2d(3, c, 3, padding=1)
            self.enhance = BandEnhancer(cfg.enhancer())
            self.refine = nn.Sequential(
                *(MultiScaleBlock(c, cfg.fam_splits, cfg.fam_scales)
                  for _ in range(cfg.fam_depth)))
        else:
            decomposer = DctDecomposer if cfg.variant == "S2" else ConvDecomposer
            self.decompose = decomposer(3, c)
            if cfg.variant == "S3":
                self.interact = IndependentBands(cfg.enhancer())
            else:
                self.interact = BandInteraction(cfg.enhancer(), cfg.combine)
            if cfg.variant == "S4":
                self.aggregate = BandMerger(c)
            else:
                self.aggregate = BandAggregator(
                    c, cfg.fam_splits, cfg.fam_scales, cfg.fam_depth)
        self.head = nn.Conv2d(c, 3, 3, padding=1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def _trunk(self, x):
        if self.cfg.variant == "S1":
            return self.refine(self.enhance(self.stem(x)))
        bands: BandSet = self.decompose(x)
        return self.aggregate(self.interact(bands))

    def forward(self, x):
        pad_h = (-x.shape[2]) % 4
        pad_w = (-x.shape[3]) % 4
        padded = F.pad(x, (0, pad_w, 0, pad_h), mode="reflect") if pad_h or pad_w else x
        out = self.head(self._trunk(padded))
        if self.cfg.global_residual:
            out = out + padded
        if pad_h or pad_w:
            out = out[:, :, :x.shape[2], :x.shape[3]]
        return out

    @torch.no_grad()
    def predict(self, x):
        """Inference path: forward then clamp to the unit range."""
        return self.forward(x).clamp(0.0, 1.0)


def build_model(cfg: ModelConfig, seed: int = 0) -> DerainModel:
    """Construct with reproducible parameter init."""
    torch.manual_seed(seed)
    return DerainModel(cfg)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


@dataclass
class Checkpoint:
    config_json: str
    params: dict = field(default_factory=dict)  # name -> float32 ndarray
    step: int = 0
    rng_state: bytes = b""

    @property
    def config(self) -> ModelConfig:
        return ModelConfig.from_dict(json.loads(self.config_json))


def checkpoint_from_model(model: DerainModel, step: int = 0,
                          rng_state: bytes = b"") -> Checkpoint:
    params = {
        name: tensor.detach().cpu().numpy().astype(np.float32)
        for name, tensor in model.state_dict().items()
    }
    return Checkpoint(
        config_json=model.cfg.canonical_json(),
        params=params,
        step=step,
        rng_state=rng_state,
    )


def _serialize(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    cfg_bytes = ckpt.config_json.encode("utf-8")
    buf.write(struct.pack("<Q", len(cfg_bytes)))
    buf.write(cfg_bytes)
    buf.write(struct.pack("<Q", ckpt.step))
    buf.write(struct.pack("<Q", len(ckpt.rng_state)))
    buf.write(ckpt.rng_state)
    buf.write(struct.pack("<Q", len(ckpt.params)))
    for name in sorted(ckpt.params):
        arr = np.ascontiguousarray(ckpt.params[name], dtype=np.float32)
        name_bytes = name.encode("utf-8")
        buf.write(struct.pack("<H", len(name_bytes)))
        buf.write(name_bytes)
        buf.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(arr.astype("<f4").tobytes())
    payload = buf.getvalue()
    return payload + hashlib.sha256(payload).digest()


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_serialize(ckpt))


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 4 + 4 + 32:
        raise CorruptCheckpoint(f"{path}: truncated file")
    payload, digest = raw[:-32], raw[-32:]
    if payload[:4] != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic {payload[:4]!r}")
    version = struct.unpack_from("<I", payload, 4)[0]
    if version != CHECKPOINT_VERSION:
        raise VersionError(
            f"{path}: format version {version}, expected {CHECKPOINT_VERSION}")
    if hashlib.sha256(payload).digest() != digest:
        raise CorruptCheckpoint(f"{path}: checksum mismatch")
    try:
        off = 8
        (cfg_len,) = struct.unpack_from("<Q", payload, off)
        off += 8
        config_json = payload[off:off + cfg_len].decode("utf-8")
        off += cfg_len
        (step,) = struct.unpack_from("<Q", payload, off)
        off += 8
        (rng_len,) = struct.unpack_from("<Q", payload, off)
        off += 8
        rng_state = payload[off:off + rng_len]
        off += rng_len
        (count,) = struct.unpack_from("<Q", payload, off)
        off += 8
        params = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", payload, off)
            off += 2
            name = payload[off:off + name_len].decode("utf-8")
            off += name_len
            (ndim,) = struct.unpack_from("<B", payload, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", payload, off)
            off += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            arr = np.frombuffer(payload, dtype="<f4", count=size, offset=off)
            off += 4 * size
            params[name] = arr.reshape(shape).copy()
        if off != len(payload):
            raise CorruptCheckpoint(f"{path}: {len(payload) - off} trailing bytes")
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise CorruptCheckpoint(f"{path}: malformed parameter table") from exc
    return Checkpoint(config_json=config_json, params=params, step=step,
                      rng_state=rng_state)


def apply_checkpoint(model: DerainModel, ckpt: Checkpoint) -> None:
    """Load parameters into the model, validating names and shapes."""
    state = model.state_dict()
    if set(state) != set(ckpt.params):
        missing = sorted(set(state) - set(ckpt.params))
        extra = sorted(set(ckpt.params) - set(state))
        raise CorruptCheckpoint(
            f"parameter names disagree with config: missing={missing} extra={extra}")
    for name, tensor in state.items():
        arr = ckpt.params[name]
        if tuple(tensor.shape) != arr.shape:
            raise CorruptCheckpoint(
                f"shape mismatch for {name}: file {arr.shape}, model {tuple(tensor.shape)}")
    model.load_state_dict(
        {name: torch.from_numpy(ckpt.params[name].copy()) for name in state})


def model_from_checkpoint(ckpt: Checkpoint) -> DerainModel:
    model = DerainModel(ckpt.config)
    apply_checkpoint(model, ckpt)
    return model

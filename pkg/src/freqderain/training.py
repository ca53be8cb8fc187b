"""L1 training loop with a triangular cyclic learning rate and Adam.

Every random choice (batch membership, patch positions, flips) is a pure
function of (seed, step), so a run is reproducible regardless of how the
data pipeline is parallelized, and resuming at step k continues the exact
sample sequence.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .data import PairedSample, augment_flip, sample_patch_pair
from .errors import ConfigError, NaNLossError, ShapeError
from .model import Checkpoint, DerainModel, checkpoint_from_model, save_checkpoint
from .ops import set_deterministic


@dataclass
class TrainConfig:
    patch_size: int = 64
    batch_size: int = 4
    total_iters: int = 2000
    base_lr: float = 1e-4
    peak_lr: float = 3e-4
    cycle_length_iters: int = 1000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    loss: str = "L1"
    flips_enabled: bool = True
    deterministic: bool = True
    checkpoint_every: int = 0  # 0 = only final

    def __post_init__(self):
        if not 0 < self.base_lr <= self.peak_lr:
            raise ConfigError("need 0 < base_lr <= peak_lr")
        if self.cycle_length_iters <= 0:
            raise ConfigError("cycle_length_iters must be positive")
        if self.loss != "L1":
            raise ConfigError(f"unsupported loss {self.loss!r}")
        if self.patch_size < 4 or self.patch_size % 4:
            raise ConfigError("patch_size must be a positive multiple of 4")
        if self.batch_size < 1 or self.total_iters < 0:
            raise ConfigError("batch_size must be >= 1 and total_iters >= 0")


def l1_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if pred.shape != target.shape:
        raise ShapeError(f"loss shapes differ: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return (pred - target).abs().mean()


def cyclic_lr(step: int, cfg: TrainConfig) -> float:
    """Triangular wave from base to peak and back over each cycle."""
    if step < 0:
        raise ValueError("step must be nonnegative")
    half = cfg.cycle_length_iters / 2.0
    pos = step % cfg.cycle_length_iters
    frac = pos / half if pos <= half else (cfg.cycle_length_iters - pos) / half
    return cfg.base_lr + (cfg.peak_lr - cfg.base_lr) * frac


def make_optimizer(model: torch.nn.Module, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(
        model.parameters(), lr=cfg.base_lr,
        betas=(cfg.adam_beta1, cfg.adam_beta2), eps=cfg.adam_eps)


def adam_step(optimizer: torch.optim.Adam, lr: float) -> None:
    """One update at the given rate; a zero gradient leaves params unchanged."""
    for group in optimizer.param_groups:
        group["lr"] = lr
    optimizer.step()


def sample_batch(dataset: list[PairedSample], cfg: TrainConfig, step: int):
    """Deterministic (rainy, clean) unit-range batch tensors for one step."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, step]))
    idx = rng.integers(0, len(dataset), size=cfg.batch_size)
    rainy, clean = [], []
    for i in idx:
        pair = sample_patch_pair(dataset[int(i)], cfg.patch_size,
                                 seed=int(rng.integers(0, 2 ** 31)))
        if cfg.flips_enabled:
            pair = augment_flip(pair, bool(rng.integers(0, 2)), bool(rng.integers(0, 2)))
        rainy.append(pair.rainy.to_unit().pixels.transpose(2, 0, 1))
        clean.append(pair.clean.to_unit().pixels.transpose(2, 0, 1))
    to_tensor = lambda arrs: torch.from_numpy(np.stack(arrs)).to(torch.float32)
    return to_tensor(rainy), to_tensor(clean)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log_rows: list  # (step, lr, loss, seconds)
    log_path: Path | None = None


def _grad_norms(model: torch.nn.Module) -> dict:
    return {
        name: float(p.grad.norm()) if p.grad is not None else 0.0
        for name, p in model.named_parameters()
    }


def train(model: DerainModel, dataset: list[PairedSample], cfg: TrainConfig,
          out_dir=None) -> TrainResult:
    """Run cfg.total_iters updates; log (step, lr, loss, seconds) per step.

    Writes train_log.csv plus periodic and final checkpoints when out_dir is
    given. Raises NaNLossError (with grad diagnostics) on a non-finite loss.
    """
    if not dataset:
        raise ValueError("dataset must be nonempty")
    if cfg.deterministic:
        set_deterministic(True)
    torch.manual_seed(cfg.seed)
    optimizer = make_optimizer(model, cfg)
    out_dir = Path(out_dir) if out_dir is not None else None
    log_rows = []

    def write_log():
        if out_dir is None:
            return None
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "train_log.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "lr", "loss", "seconds"])
            writer.writerows(log_rows)
        return path

    start = time.perf_counter()
    model.train()
    for step in range(cfg.total_iters):
        rainy, clean = sample_batch(dataset, cfg, step)
        lr = cyclic_lr(step, cfg)
        optimizer.zero_grad()
        pred = model(rainy)
        loss = l1_loss(pred, clean)
        loss_val = float(loss.detach())
        if not np.isfinite(loss_val):
            loss.backward()
            write_log()
            raise NaNLossError(step=step, lr=lr, loss=loss_val,
                               grad_norms=_grad_norms(model))
        loss.backward()
        adam_step(optimizer, lr)
        log_rows.append((step, lr, loss_val, time.perf_counter() - start))
        if out_dir is not None and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            ckpt = checkpoint_from_model(model, step=step + 1,
                                         rng_state=bytes(torch.get_rng_state().numpy().tobytes()))
            save_checkpoint(out_dir / f"step_{step + 1:07d}.ckpt", ckpt)

    final = checkpoint_from_model(model, step=cfg.total_iters,
                                  rng_state=bytes(torch.get_rng_state().numpy().tobytes()))
    log_path = write_log()
    if out_dir is not None:
        save_checkpoint(out_dir / "final.ckpt", final)
    return TrainResult(checkpoint=final, log_rows=log_rows, log_path=log_path)


def moving_average(values, window: int) -> np.ndarray:
    """Sliding-window means; shorter inputs collapse to the plain mean."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) <= window:
        return np.array([values.mean()])
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode="valid")

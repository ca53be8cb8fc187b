"""Command-line entry point.

Subcommands: train, infer, evaluate, analyze-bands, ablate, make-data.
Exit codes: 0 success, 1 training aborted on non-finite loss, 2 config or
usage problem, 3 checkpoint problem, 4 data problem.

Config files (TOML or JSON) carry optional [model] and [train] tables whose
keys mirror ModelConfig and TrainConfig fields; command-line flags override
file values.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import bands as band_analysis
from . import data as data_mod
from . import metrics as metrics_mod
from .errors import (CheckpointError, ConfigError, DecodeError, NaNLossError,
                     ShapeError)
from .model import (PRESETS, VARIANTS, ModelConfig, build_model, load_checkpoint,
                    model_from_checkpoint, parameter_count)
from .training import TrainConfig, train

EXIT_OK = 0
EXIT_NAN = 1
EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3
EXIT_DATA = 4


def load_config_file(path) -> tuple[dict, dict]:
    """Read {model, train} tables from a TOML or JSON file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        parsed = tomllib.loads(text)
    else:
        try:
            parsed = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    unknown = set(parsed) - {"model", "train"}
    if unknown:
        raise ConfigError(f"{path}: unknown top-level sections {sorted(unknown)}")
    return parsed.get("model", {}), parsed.get("train", {})


def resolve_configs(args) -> tuple[ModelConfig, TrainConfig]:
    model_dict = PRESETS[getattr(args, "preset", "desk")].to_dict()
    train_dict = {}
    if getattr(args, "config", None):
        file_model, file_train = load_config_file(args.config)
        model_dict.update(file_model)
        train_dict.update(file_train)
    if getattr(args, "variant", None):
        model_dict["variant"] = args.variant
    for flag, key in [("iters", "total_iters"), ("seed", "seed"),
                      ("checkpoint_every", "checkpoint_every"),
                      ("patch_size", "patch_size"), ("batch_size", "batch_size")]:
        value = getattr(args, flag, None)
        if value is not None:
            train_dict[key] = value
    if getattr(args, "deterministic", None) is not None:
        train_dict["deterministic"] = args.deterministic
    try:
        train_cfg = TrainConfig(**train_dict)
    except TypeError as exc:
        raise ConfigError(f"unknown train config key: {exc}") from exc
    return ModelConfig.from_dict(model_dict), train_cfg


def _require_data_root(path) -> Path:
    root = Path(path)
    if not (root / "rainy").is_dir() or not (root / "clean").is_dir():
        raise ConfigError(
            f"data root {root} must contain rainy/ and clean/ subdirectories")
    return root


def _evaluate_model(model, stems, eval_root):
    """Mean PSNR/SSIM of model outputs against clean ground truth."""
    psnrs, ssims = [], []
    for stem in stems:
        pair = data_mod.load_pair(eval_root, stem)
        x = torch.from_numpy(
            pair.rainy.pixels.transpose(2, 0, 1)[None]).to(torch.float32)
        out = model.predict(x)[0].numpy().transpose(1, 2, 0)
        pred = data_mod.Image(np.clip(out, 0.0, 1.0), "unit")
        psnrs.append(metrics_mod.psnr(pred, pair.clean))
        ssims.append(metrics_mod.ssim(pred, pair.clean))
    return float(np.mean(psnrs)), float(np.mean(ssims))


def cmd_train(args) -> int:
    try:
        model_cfg, train_cfg = resolve_configs(args)
        root = _require_data_root(args.data_root)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        _, pairs = data_mod.load_paired_dataset(root)
    except (FileNotFoundError, DecodeError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if not pairs:
        print(f"error: no image pairs under {root}", file=sys.stderr)
        return EXIT_DATA
    model = build_model(model_cfg, seed=train_cfg.seed)
    try:
        result = train(model, pairs, train_cfg, out_dir=args.out)
    except NaNLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NAN
    last = result.log_rows[-1][2] if result.log_rows else float("nan")
    print(f"trained {train_cfg.total_iters} iters; final loss {last:.6f}; "
          f"checkpoint at {Path(args.out) / 'final.ckpt'}")
    return EXIT_OK


def cmd_infer(args) -> int:
    try:
        ckpt = load_checkpoint(args.checkpoint)
        model = model_from_checkpoint(ckpt)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    model.eval()
    in_dir, out_dir = Path(args.input), Path(args.output)
    pngs = sorted(in_dir.glob("*.png"))
    if not pngs:
        print(f"error: no PNG files under {in_dir}", file=sys.stderr)
        return EXIT_DATA
    for path in pngs:
        img = data_mod.load_image(path).to_unit()
        x = torch.from_numpy(img.pixels.transpose(2, 0, 1)[None]).to(torch.float32)
        out = model.predict(x)[0].numpy().transpose(1, 2, 0)
        data_mod.save_image(data_mod.Image(np.clip(out, 0.0, 1.0), "unit"),
                            out_dir / path.name)
    print(f"derained {len(pngs)} images into {out_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    pred = {p.stem: p for p in pred_dir.glob("*.png")}
    gt = {p.stem: p for p in gt_dir.glob("*.png")}
    unmatched = sorted(set(pred) ^ set(gt))
    if not pred or not gt or unmatched:
        print(f"error: unmatched stems: {unmatched}" if unmatched
              else "error: no PNG pairs found", file=sys.stderr)
        return EXIT_DATA
    names = sorted(pred)
    psnrs, ssims = [], []
    try:
        for name in names:
            a = data_mod.load_image(pred[name])
            b = data_mod.load_image(gt[name])
            psnrs.append(metrics_mod.psnr(a, b))
            ssims.append(metrics_mod.ssim(a, b))
    except (DecodeError, ShapeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    out_csv = Path(args.out_csv)
    metrics_mod.write_metrics_csv(out_csv, names, psnrs, ssims)
    print(f"mean psnr {np.mean(psnrs):.4f} dB, mean ssim {np.mean(ssims):.6f}; "
          f"wrote {out_csv}")
    return EXIT_OK


def cmd_analyze_bands(args) -> int:
    try:
        root = _require_data_root(args.data_root)
        stems, pairs = data_mod.load_paired_dataset(root)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, DecodeError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        per_pair, mean = band_analysis.analyze_corpus(pairs)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    band_analysis.write_band_csv(args.out_csv, stems, per_pair, mean)
    if args.plot:
        band_analysis.plot_band_summary(args.plot, mean)
    print(f"analyzed {len(pairs)} pairs; wrote {args.out_csv}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    if args.variant not in VARIANTS:
        print(f"error: unknown variant {args.variant!r} (choose from {VARIANTS})",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        model_cfg, train_cfg = resolve_configs(args)
        root = _require_data_root(args.data_root)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        _, pairs = data_mod.load_paired_dataset(root)
        eval_root = Path(args.eval_root) if args.eval_root else root
        eval_stems = data_mod.list_pair_stems(eval_root)
    except (FileNotFoundError, DecodeError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if not pairs or not eval_stems:
        print(f"error: no image pairs under {root}", file=sys.stderr)
        return EXIT_DATA
    model = build_model(model_cfg, seed=train_cfg.seed)
    out_dir = Path(args.out)
    try:
        result = train(model, pairs, train_cfg, out_dir=out_dir / args.variant)
    except NaNLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NAN
    mean_psnr, mean_ssim = _evaluate_model(model, eval_stems, eval_root)
    final_loss = result.log_rows[-1][2] if result.log_rows else float("nan")
    csv_path = out_dir / "ablation.csv"
    out_dir.mkdir(parents=True, exist_ok=True)
    new_file = not csv_path.exists()
    with open(csv_path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(["variant", "final_loss", "psnr", "ssim", "param_count"])
        writer.writerow([args.variant, f"{final_loss:.6f}", f"{mean_psnr:.4f}",
                         f"{mean_ssim:.6f}", parameter_count(model)])
    print(f"{args.variant}: loss {final_loss:.4f}, psnr {mean_psnr:.2f}, "
          f"ssim {mean_ssim:.4f}, params {parameter_count(model)}")
    return EXIT_OK


def cmd_make_data(args) -> int:
    names = data_mod.make_synthetic_dataset(
        args.out, count=args.count, seed=args.seed,
        height=args.size, width=args.size)
    print(f"wrote {len(names)} pairs under {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqderain",
        description="Frequency-band deraining: training, inference, and analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_train_flags(p):
        p.add_argument("--config", help="TOML or JSON config file")
        p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
        p.add_argument("--iters", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--patch-size", dest="patch_size", type=int, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int,
                       default=None)
        p.add_argument("--deterministic", dest="deterministic",
                       action="store_true", default=None)
        p.add_argument("--no-deterministic", dest="deterministic",
                       action="store_false")

    p = sub.add_parser("train", help="train a model on a rainy/clean directory")
    add_train_flags(p)
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--data-root", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="derain every PNG in a directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="PSNR/SSIM of predictions vs ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out-csv", default="metrics.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze-bands", help="DCT band energy/MSE over a paired set")
    p.add_argument("--data-root", required=True)
    p.add_argument("--out-csv", default="bands.csv")
    p.add_argument("--plot", default=None, help="optional summary chart PNG")
    p.set_defaults(func=cmd_analyze_bands)

    p = sub.add_parser("ablate", help="train one variant and append to ablation.csv")
    add_train_flags(p)
    p.add_argument("--variant", required=True)
    p.add_argument("--data-root", required=True)
    p.add_argument("--eval-root", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("make-data", help="generate a synthetic rainy/clean dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=96)
    p.set_defaults(func=cmd_make_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

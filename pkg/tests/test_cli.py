import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from freqderain.cli import main
from freqderain.data import (Image, generate_clean_image, load_image,
                             make_synthetic_dataset, save_image)
from freqderain.model import (ModelConfig, build_model, checkpoint_from_model,
                              save_checkpoint)

TINY = dict(channels=8, heads=2, blocks_per_band=1, fam_splits=2,
            fam_scales=[2], fam_depth=1)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data") / "ds"
    make_synthetic_dataset(root, count=4, seed=0, height=32, width=32)
    return root


@pytest.fixture()
def tiny_config_file(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({
        "model": TINY,
        "train": {"patch_size": 16, "batch_size": 2, "total_iters": 2,
                  "cycle_length_iters": 10, "seed": 1},
    }))
    return cfg


def zero_head_checkpoint(tmp_path):
    model = build_model(ModelConfig(**{**TINY, "fam_scales": (2,)}), seed=0)
    path = tmp_path / "zero.ckpt"
    save_checkpoint(path, checkpoint_from_model(model))
    return path


class TestTrainCommand:
    def test_missing_data_root_exit_2(self, tmp_path, capsys):
        rc = main(["train", "--data-root", str(tmp_path / "nope"),
                   "--out", str(tmp_path / "out")])
        assert rc == 2
        assert "nope" in capsys.readouterr().err

    def test_zero_iters_writes_initial_checkpoint(self, dataset, tmp_path,
                                                  tiny_config_file):
        out = tmp_path / "run"
        rc = main(["train", "--config", str(tiny_config_file), "--iters", "0",
                   "--data-root", str(dataset), "--out", str(out)])
        assert rc == 0
        assert (out / "final.ckpt").exists()

    def test_short_run_logs_finite_loss(self, dataset, tmp_path, tiny_config_file):
        out = tmp_path / "run"
        rc = main(["train", "--config", str(tiny_config_file),
                   "--data-root", str(dataset), "--out", str(out)])
        assert rc == 0
        rows = list(csv.reader((out / "train_log.csv").open()))
        assert rows[0] == ["step", "lr", "loss", "seconds"]
        assert len(rows) == 3
        assert math.isfinite(float(rows[-1][2]))

    def test_empty_data_root_exit_4(self, tmp_path):
        (tmp_path / "ds" / "rainy").mkdir(parents=True)
        (tmp_path / "ds" / "clean").mkdir(parents=True)
        rc = main(["train", "--data-root", str(tmp_path / "ds"),
                   "--out", str(tmp_path / "out")])
        assert rc == 4

    def test_bad_config_file_exit_2(self, dataset, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        rc = main(["train", "--config", str(bad), "--data-root", str(dataset),
                   "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_rerun_into_fresh_out_dir_is_idempotent(self, dataset, tmp_path,
                                                    tiny_config_file):
        blobs = []
        for run in range(2):
            out = tmp_path / f"run{run}"
            rc = main(["train", "--config", str(tiny_config_file),
                       "--data-root", str(dataset), "--out", str(out)])
            assert rc == 0
            blobs.append((out / "final.ckpt").read_bytes())
        assert blobs[0] == blobs[1]

    def test_toml_config_accepted(self, dataset, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text(
            "[model]\nchannels = 8\nblocks_per_band = 1\nfam_splits = 2\n"
            "fam_scales = [2]\nfam_depth = 1\n"
            "[train]\npatch_size = 16\nbatch_size = 2\ntotal_iters = 1\n"
            "cycle_length_iters = 5\n")
        rc = main(["train", "--config", str(cfg), "--data-root", str(dataset),
                   "--out", str(tmp_path / "o")])
        assert rc == 0


class TestInferCommand:
    def test_zero_head_is_byte_identity(self, tmp_path):
        ckpt = zero_head_checkpoint(tmp_path)
        in_dir, out_dir = tmp_path / "in", tmp_path / "out"
        for i in range(2):
            save_image(generate_clean_image(i, 24, 24), in_dir / f"img_{i}.png")
        rc = main(["infer", "--checkpoint", str(ckpt), "--input", str(in_dir),
                   "--output", str(out_dir)])
        assert rc == 0
        for i in range(2):
            a = (in_dir / f"img_{i}.png").read_bytes()
            b = (out_dir / f"img_{i}.png").read_bytes()
            assert load_image(in_dir / f"img_{i}.png").pixels.tolist() == \
                load_image(out_dir / f"img_{i}.png").pixels.tolist()

    def test_odd_dimensions_preserved(self, tmp_path):
        ckpt = zero_head_checkpoint(tmp_path)
        in_dir, out_dir = tmp_path / "in", tmp_path / "out"
        save_image(generate_clean_image(0, 67, 93), in_dir / "odd.png")
        rc = main(["infer", "--checkpoint", str(ckpt), "--input", str(in_dir),
                   "--output", str(out_dir)])
        assert rc == 0
        out = load_image(out_dir / "odd.png")
        assert (out.height, out.width) == (67, 93)

    def test_deterministic_output_bytes(self, tmp_path):
        ckpt = zero_head_checkpoint(tmp_path)
        in_dir = tmp_path / "in"
        save_image(generate_clean_image(5, 32, 32), in_dir / "x.png")
        outs = []
        for run in range(2):
            out_dir = tmp_path / f"out{run}"
            assert main(["infer", "--checkpoint", str(ckpt), "--input",
                         str(in_dir), "--output", str(out_dir)]) == 0
            outs.append((out_dir / "x.png").read_bytes())
        assert outs[0] == outs[1]

    def test_corrupt_checkpoint_exit_3(self, tmp_path, capsys):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"FQDR" + b"\x00" * 100)
        in_dir = tmp_path / "in"
        save_image(generate_clean_image(0, 16, 16), in_dir / "x.png")
        rc = main(["infer", "--checkpoint", str(bad), "--input", str(in_dir),
                   "--output", str(tmp_path / "o")])
        assert rc == 3

    def test_missing_checkpoint_exit_3(self, tmp_path):
        rc = main(["infer", "--checkpoint", str(tmp_path / "none.ckpt"),
                   "--input", str(tmp_path), "--output", str(tmp_path / "o")])
        assert rc == 3

    def test_no_inputs_exit_4(self, tmp_path):
        ckpt = zero_head_checkpoint(tmp_path)
        rc = main(["infer", "--checkpoint", str(ckpt),
                   "--input", str(tmp_path / "empty"),
                   "--output", str(tmp_path / "o")])
        assert rc == 4


class TestEvaluateCommand:
    def test_identical_dirs_give_inf_and_unit_ssim(self, tmp_path, capsys):
        d = tmp_path / "imgs"
        for i in range(2):
            save_image(generate_clean_image(i, 24, 24), d / f"{i}.png")
        out_csv = tmp_path / "m.csv"
        rc = main(["evaluate", "--pred", str(d), "--gt", str(d),
                   "--out-csv", str(out_csv)])
        assert rc == 0
        rows = list(csv.reader(out_csv.open()))
        mean = rows[-1]
        assert mean[0] == "MEAN"
        assert float(mean[1]) == math.inf
        assert float(mean[2]) == pytest.approx(1.0, abs=1e-9)

    def test_offset_gray_pair_closed_form(self, tmp_path):
        pred, gt = tmp_path / "pred", tmp_path / "gt"
        save_image(Image(np.zeros((16, 16, 3)), "byte"), pred / "g.png")
        save_image(Image(np.full((16, 16, 3), 128.0), "byte"), gt / "g.png")
        out_csv = tmp_path / "m.csv"
        rc = main(["evaluate", "--pred", str(pred), "--gt", str(gt),
                   "--out-csv", str(out_csv)])
        assert rc == 0
        rows = list(csv.reader(out_csv.open()))
        assert float(rows[1][1]) == pytest.approx(10 * math.log10(255 ** 2 / 128 ** 2),
                                                  abs=1e-4)

    def test_empty_dirs_exit_4(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        rc = main(["evaluate", "--pred", str(tmp_path / "a"),
                   "--gt", str(tmp_path / "b"), "--out-csv", str(tmp_path / "m.csv")])
        assert rc == 4

    def test_unmatched_stems_listed_exit_4(self, tmp_path, capsys):
        pred, gt = tmp_path / "pred", tmp_path / "gt"
        save_image(generate_clean_image(0, 16, 16), pred / "a.png")
        save_image(generate_clean_image(0, 16, 16), gt / "a.png")
        save_image(generate_clean_image(1, 16, 16), gt / "extra.png")
        rc = main(["evaluate", "--pred", str(pred), "--gt", str(gt),
                   "--out-csv", str(tmp_path / "m.csv")])
        assert rc == 4
        assert "extra" in capsys.readouterr().err


class TestAnalyzeBandsCommand:
    def test_csv_emitted(self, dataset, tmp_path):
        out_csv = tmp_path / "bands.csv"
        rc = main(["analyze-bands", "--data-root", str(dataset),
                   "--out-csv", str(out_csv)])
        assert rc == 0
        lines = [ln for ln in out_csv.read_text().splitlines()
                 if not ln.startswith("#")]
        rows = list(csv.reader(lines))
        assert rows[0][0] == "name"
        assert rows[-1][0] == "MEAN"
        assert len(rows) == 6  # header + 4 pairs + mean

    def test_missing_root_exit_2(self, tmp_path):
        rc = main(["analyze-bands", "--data-root", str(tmp_path / "none"),
                   "--out-csv", str(tmp_path / "b.csv")])
        assert rc == 2


class TestAblateCommand:
    def test_unknown_variant_exit_2(self, dataset, tmp_path):
        rc = main(["ablate", "--variant", "S7", "--data-root", str(dataset),
                   "--out", str(tmp_path)])
        assert rc == 2

    def test_appends_rows_to_shared_csv(self, dataset, tmp_path, tiny_config_file):
        out = tmp_path / "ablation"
        for variant in ("full", "S4"):
            rc = main(["ablate", "--variant", variant,
                       "--config", str(tiny_config_file),
                       "--data-root", str(dataset), "--out", str(out)])
            assert rc == 0
        rows = list(csv.reader((out / "ablation.csv").open()))
        assert rows[0] == ["variant", "final_loss", "psnr", "ssim", "param_count"]
        assert [r[0] for r in rows[1:]] == ["full", "S4"]
        assert int(rows[1][4]) > int(rows[2][4])  # S4 drops the fusion block


class TestMakeDataCommand:
    def test_generates_layout(self, tmp_path):
        rc = main(["make-data", "--out", str(tmp_path / "ds"), "--count", "3",
                   "--seed", "1", "--size", "24"])
        assert rc == 0
        assert len(list((tmp_path / "ds" / "rainy").glob("*.png"))) == 3
        assert len(list((tmp_path / "ds" / "clean").glob("*.png"))) == 3


class TestEntryPoint:
    def test_console_script_usage_error(self):
        proc = subprocess.run([sys.executable, "-m", "freqderain.cli"],
                              capture_output=True, text=True)
        assert proc.returncode == 2  # argparse usage failure

    def test_help_lists_subcommands(self):
        proc = subprocess.run([sys.executable, "-m", "freqderain.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        for cmd in ["train", "infer", "evaluate", "analyze-bands", "ablate"]:
            assert cmd in proc.stdout

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqderain.data import (Image, PairedSample, RainSynthesisConfig,
                             augment_flip, generate_clean_image, list_pair_stems,
                             load_image, load_paired_dataset, make_synthetic_dataset,
                             rgb_to_luminance, sample_patch_pair, save_image,
                             synthesize_rain)
from freqderain.errors import DecodeError, ShapeError

from oracles import write_reference_png


def tag_image(h, w, offset=0.0):
    """Pixel values encode coordinates, so index maps are observable."""
    yy, xx = np.mgrid[0:h, 0:w]
    px = np.stack([yy, xx, np.zeros_like(yy)], axis=2).astype(np.float64) + offset
    return Image(px / 1024.0, "unit")


class TestLoadSave:
    def test_all_black_png(self, tmp_path):
        write_reference_png(tmp_path / "black.png", np.zeros((2, 2, 3), np.uint8))
        img = load_image(tmp_path / "black.png")
        assert img.value_range == "byte"
        assert img.height == 2 and img.width == 2
        assert np.all(img.pixels == 0)

    def test_reference_encoder_single_pixel(self, tmp_path):
        arr = np.zeros((3, 4, 3), np.uint8)
        arr[0, 0] = (10, 20, 30)
        write_reference_png(tmp_path / "px.png", arr)
        img = load_image(tmp_path / "px.png")
        assert tuple(img.pixels[0, 0]) == (10.0, 20.0, 30.0)
        assert np.all(img.pixels[1:, :] == 0)

    def test_round_trip_byte_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        arr = rng.integers(0, 256, size=(5, 7, 3)).astype(np.float64)
        save_image(Image(arr, "byte"), tmp_path / "rt.png")
        back = load_image(tmp_path / "rt.png")
        assert np.array_equal(back.pixels, arr)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "nope.png")

    def test_malformed_png(self, tmp_path):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"\x89PNG\r\n\x1a\nnot really a png")
        with pytest.raises(DecodeError):
            load_image(bad)

    def test_non_png_rejected(self, tmp_path):
        from PIL import Image as PILImage
        p = tmp_path / "img.png"
        PILImage.fromarray(np.zeros((2, 2, 3), np.uint8)).save(p, format="BMP")
        with pytest.raises(DecodeError):
            load_image(p)


class TestLuminance:
    def test_white(self):
        img = Image(np.full((2, 2, 3), 255.0), "byte")
        assert np.allclose(rgb_to_luminance(img), 255.0)

    def test_pure_red(self):
        img = Image(np.tile([255.0, 0.0, 0.0], (2, 2, 1)), "byte")
        assert np.allclose(rgb_to_luminance(img), 0.299 * 255)

    def test_gray_constant(self):
        img = Image(np.full((4, 3, 3), 77.0), "byte")
        assert np.allclose(rgb_to_luminance(img), 77.0)


class TestSynthesizeRain:
    def test_no_rain_is_identity(self):
        clean = generate_clean_image(0, 32, 32)
        cfg = RainSynthesisConfig(streak_count=0, accumulation_strength=0.0, seed=1)
        pair = synthesize_rain(clean, cfg)
        assert np.array_equal(pair.rainy.pixels, clean.pixels)

    def test_deterministic_under_seed(self):
        clean = generate_clean_image(1, 48, 48)
        cfg = RainSynthesisConfig(seed=42, accumulation_strength=0.1)
        a = synthesize_rain(clean, cfg)
        b = synthesize_rain(clean, cfg)
        assert np.array_equal(a.rainy.pixels, b.rainy.pixels)

    def test_streaks_raise_mean(self):
        gray = Image(np.full((64, 64, 3), 0.5), "unit")
        cfg = RainSynthesisConfig(streak_count=50, streak_length_px=12,
                                  streak_intensity=0.3,
                                  accumulation_strength=0.0, seed=7)
        pair = synthesize_rain(gray, cfg)
        # additive streak layer: direct pixel sums must increase
        assert pair.rainy.pixels.sum() > pair.clean.pixels.sum()

    def test_output_stays_in_unit_range(self):
        clean = generate_clean_image(3, 40, 40)
        cfg = RainSynthesisConfig(streak_count=200, streak_intensity=1.0,
                                  accumulation_strength=1.0,
                                  accumulation_sigma=2.0, seed=5)
        pair = synthesize_rain(clean, cfg)
        assert pair.rainy.pixels.min() >= 0.0
        assert pair.rainy.pixels.max() <= 1.0

    def test_byte_range_input_rejected(self):
        with pytest.raises(ValueError):
            synthesize_rain(Image(np.zeros((8, 8, 3)), "byte"), RainSynthesisConfig())


class TestPatchSampling:
    def test_full_size_crop_is_identity(self):
        pair = PairedSample(tag_image(16, 16), tag_image(16, 16, offset=1.0))
        out = sample_patch_pair(pair, 16, seed=0)
        assert np.array_equal(out.rainy.pixels, pair.rainy.pixels)
        assert np.array_equal(out.clean.pixels, pair.clean.pixels)

    def test_shape_and_colocation(self):
        pair = PairedSample(tag_image(256, 256), tag_image(256, 256, offset=1.0))
        out = sample_patch_pair(pair, 64, seed=3)
        assert out.rainy.pixels.shape == (64, 64, 3)
        assert out.clean.pixels.shape == (64, 64, 3)
        # identical offsets: tags differ by exactly the constant offset
        assert np.allclose(out.clean.pixels - out.rainy.pixels, 1.0 / 1024.0)

    def test_crop_positions_vary_across_seeds(self):
        pair = PairedSample(tag_image(32, 32), tag_image(32, 32))
        corners = {tuple(sample_patch_pair(pair, 8, seed=s).rainy.pixels[0, 0, :2])
                   for s in range(100)}
        assert len(corners) > 1

    def test_oversized_patch_rejected(self):
        pair = PairedSample(tag_image(16, 16), tag_image(16, 16))
        with pytest.raises(ValueError):
            sample_patch_pair(pair, 17, seed=0)

    def test_deterministic(self):
        pair = PairedSample(tag_image(64, 64), tag_image(64, 64))
        a = sample_patch_pair(pair, 16, seed=9)
        b = sample_patch_pair(pair, 16, seed=9)
        assert np.array_equal(a.rainy.pixels, b.rainy.pixels)


class TestFlips:
    def test_no_flags_is_identity(self):
        pair = PairedSample(tag_image(6, 5), tag_image(6, 5))
        out = augment_flip(pair, False, False)
        assert np.array_equal(out.rainy.pixels, pair.rainy.pixels)

    @given(st.booleans(), st.booleans())
    @settings(max_examples=8, deadline=None)
    def test_involution(self, fh, fv):
        pair = PairedSample(tag_image(5, 7), tag_image(5, 7, offset=2.0))
        twice = augment_flip(augment_flip(pair, fh, fv), fh, fv)
        assert np.array_equal(twice.rainy.pixels, pair.rainy.pixels)
        assert np.array_equal(twice.clean.pixels, pair.clean.pixels)

    def test_horizontal_flip_swaps_columns(self):
        pair = PairedSample(tag_image(4, 9), tag_image(4, 9))
        out = augment_flip(pair, True, False)
        w = 9
        # column j holds what column w-1-j held (index arithmetic oracle)
        for j in range(w):
            assert np.array_equal(out.rainy.pixels[:, j],
                                  pair.rainy.pixels[:, w - 1 - j])

    def test_colocation_under_flips(self):
        pair = PairedSample(tag_image(8, 8), tag_image(8, 8, offset=3.0))
        out = augment_flip(pair, True, True)
        assert np.allclose(out.clean.pixels - out.rainy.pixels, 3.0 / 1024.0)


class TestDatasetLayout:
    def test_make_and_load(self, tmp_path):
        names = make_synthetic_dataset(tmp_path / "ds", count=3, seed=0, height=24, width=24)
        assert len(names) == 3
        stems, pairs = load_paired_dataset(tmp_path / "ds")
        assert stems == sorted(names)
        assert all(p.rainy.pixels.shape == (24, 24, 3) for p in pairs)
        assert all(p.rainy.value_range == "unit" for p in pairs)

    def test_generation_deterministic(self, tmp_path):
        make_synthetic_dataset(tmp_path / "a", count=2, seed=5, height=16, width=16)
        make_synthetic_dataset(tmp_path / "b", count=2, seed=5, height=16, width=16)
        for name in ["sample_0000.png", "sample_0001.png"]:
            a = (tmp_path / "a" / "rainy" / name).read_bytes()
            b = (tmp_path / "b" / "rainy" / name).read_bytes()
            assert a == b

    def test_unmatched_stems_listed(self, tmp_path):
        make_synthetic_dataset(tmp_path / "ds", count=2, seed=1, height=16, width=16)
        (tmp_path / "ds" / "rainy" / "sample_0001.png").unlink()
        with pytest.raises(FileNotFoundError, match="sample_0001"):
            list_pair_stems(tmp_path / "ds")


class TestImageInvariants:
    def test_range_validation(self):
        with pytest.raises(ValueError):
            Image(np.full((2, 2, 3), 2.0), "unit")
        with pytest.raises(ValueError):
            Image(np.full((2, 2, 3), -3.0), "byte")

    def test_shape_validation(self):
        with pytest.raises(ShapeError):
            Image(np.zeros((2, 2)), "unit")

    def test_pair_dim_mismatch(self):
        with pytest.raises(ShapeError):
            PairedSample(tag_image(4, 4), tag_image(4, 5))

    def test_unit_byte_round_trip(self):
        img = generate_clean_image(11, 8, 8)
        back = img.to_byte().to_unit()
        assert np.allclose(back.pixels, img.pixels)

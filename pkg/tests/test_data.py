"""Curation filters, patch extraction, histogram matching, degradation, I/O."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcenhance.autodiff import make_rng
from lcenhance.data import (DegradeParams, ImageFormatError, PairRecord,
                            brightness_filter, confidence_filter,
                            default_quality_scorer, extract_patches,
                            histogram_match, load_image, save_image,
                            synth_degrade, synthetic_pair)


def record(h, w, seed=0, value=None):
    if value is not None:
        ref = np.full((3, h, w), value)
    else:
        ref = make_rng(seed).uniform(0, 1, (3, h, w))
    return PairRecord(low=ref * 0.1, reference=ref, source_id="t")


class TestExtractPatches:
    def test_exact_grid(self):
        patches = extract_patches(record(64, 64), 32, 32)
        assert len(patches) == 4
        assert sorted(p.origin for p in patches) == [(0, 0), (0, 32), (32, 0), (32, 32)]

    def test_border_snap(self):
        """A 120-wide image with 32-stride grid snaps a final column to 88."""
        patches = extract_patches(record(32, 120), 32, 32)
        assert [p.origin[1] for p in patches] == [0, 32, 64, 88]

    def test_patch_content_matches_source(self):
        pair = record(40, 40, seed=1)
        p = extract_patches(pair, 16, 16)[3]
        r, c = p.origin
        assert np.array_equal(p.reference, pair.reference[:, r:r + 16, c:c + 16])
        assert np.array_equal(p.low, pair.low[:, r:r + 16, c:c + 16])

    def test_oversize_patch_skipped(self):
        assert extract_patches(record(16, 16), 32, 32) == []

    def test_full_coverage(self):
        patches = extract_patches(record(50, 70), 32, 32)
        mask = np.zeros((50, 70), dtype=bool)
        for p in patches:
            r, c = p.origin
            mask[r:r + 32, c:c + 32] = True
        assert mask.all()


class TestBrightnessFilter:
    def test_boundary_strictly_below(self):
        """I_avg exactly at the threshold passes; only strictly below fails."""
        assert brightness_filter(np.full((3, 4, 4), 10.0 / 255.0)).passed
        assert not brightness_filter(np.full((3, 4, 4), 9.0 / 255.0)).passed

    def test_boundary_exact_at_10(self):
        assert brightness_filter(np.full((3, 32, 32), 10.0 / 255.0)).statistic == 10.0

    def test_statistic_is_8bit_scale_mean(self):
        v = brightness_filter(np.full((3, 2, 2), 0.5))
        assert v.statistic == 128.0  # 0.5 quantizes to byte 128

    def test_channel_samples_averaged(self):
        img = np.zeros((3, 1, 1))
        img[0] = 30.0 / 255.0  # one bright channel lifts the pooled mean
        assert brightness_filter(img).statistic == 10.0


class TestConfidenceFilter:
    def test_sharp_beats_blurred(self):
        sharp = make_rng(2).uniform(0.2, 0.8, (3, 16, 16))
        blurred = np.full((3, 16, 16), sharp.mean())
        assert default_quality_scorer(sharp) > default_quality_scorer(blurred)

    def test_clipping_discounts(self):
        img = make_rng(3).uniform(0.2, 0.8, (3, 16, 16))
        clipped = img.copy()
        clipped[:, :8, :] = 1.0
        assert default_quality_scorer(clipped) < default_quality_scorer(img)

    def test_custom_scorer_and_range_check(self):
        v = confidence_filter(np.zeros((3, 4, 4)), scorer=lambda img: 0.95)
        assert v.passed and v.statistic == 0.95
        with pytest.raises(ValueError):
            confidence_filter(np.zeros((3, 4, 4)), scorer=lambda img: 1.5)


class TestHistogramMatch:
    def test_self_match_identity_on_quantized(self):
        img = make_rng(4).uniform(0, 1, (3, 16, 16))
        q = np.floor(np.clip(img, 0, 1) * 255 + 0.5) / 255.0
        np.testing.assert_allclose(histogram_match(img, img), q, atol=1e-12)

    def test_constant_target(self):
        src = make_rng(5).uniform(0, 1, (3, 8, 8))
        tgt = np.full((3, 8, 8), 0.25)
        out = histogram_match(src, tgt)
        np.testing.assert_allclose(out, np.floor(0.25 * 255 + 0.5) / 255.0)

    def test_monotone_mapping(self):
        src = make_rng(6).uniform(0, 1, (3, 32, 32))
        tgt = make_rng(7).uniform(0, 1, (3, 32, 32)) ** 2
        out = histogram_match(src, tgt)
        for ch in range(3):
            order = np.argsort(src[ch].ravel(), kind="stable")
            assert np.all(np.diff(out[ch].ravel()[order]) >= -1e-12)

    def test_shape_check(self):
        with pytest.raises(ValueError):
            histogram_match(np.zeros((1, 4, 4)), np.zeros((3, 4, 4)))


class TestSynthDegrade:
    def test_identity_params(self):
        img = make_rng(8).uniform(0, 1, (3, 8, 8))
        np.testing.assert_array_equal(synth_degrade(img, DegradeParams()), img)

    def test_gamma_gain_closed_form(self):
        img = np.full((3, 4, 4), 1.0)
        out = synth_degrade(img, DegradeParams(gamma=2.0, gain=0.25))
        np.testing.assert_allclose(out, 0.25)

    def test_monotone_in_gamma(self):
        """Higher gamma darkens sub-unit intensities."""
        img = np.full((3, 4, 4), 0.5)
        a = synth_degrade(img, DegradeParams(gamma=1.5, gain=1.0))
        b = synth_degrade(img, DegradeParams(gamma=2.5, gain=1.0))
        assert np.all(b < a)

    def test_output_clamped(self):
        img = make_rng(9).uniform(0, 1, (3, 8, 8))
        out = synth_degrade(img, DegradeParams(gamma=1.0, gain=1.0,
                                               read_noise=0.5, seed=1))
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            DegradeParams(gamma=0.5)
        with pytest.raises(ValueError):
            DegradeParams(gain=2.0)
        with pytest.raises(ValueError):
            DegradeParams(read_noise=-0.1)

    def test_noise_seeded(self):
        img = make_rng(10).uniform(0, 1, (3, 8, 8))
        p = DegradeParams(gamma=2.2, gain=0.3, read_noise=0.01, seed=3)
        np.testing.assert_array_equal(synth_degrade(img, p), synth_degrade(img, p))

    def test_synthetic_pair_properties(self):
        low, clean = synthetic_pair(0, size=16)
        assert low.shape == clean.shape == (3, 16, 16)
        assert 0.25 <= clean.min() and clean.max() <= 0.95
        assert low.mean() < clean.mean()


class TestImageIO:
    def test_ppm_one_pixel_fixture(self, tmp_path):
        path = tmp_path / "px.ppm"
        path.write_bytes(b"P6\n# comment\n1 1\n255\n" + bytes([255, 128, 0]))
        img = load_image(path)
        np.testing.assert_allclose(img[:, 0, 0], [1.0, 128 / 255.0, 0.0])

    def test_ppm_round_trip(self, tmp_path):
        img = make_rng(11).uniform(0, 1, (3, 5, 7))
        q = np.floor(img * 255 + 0.5) / 255.0
        path = tmp_path / "img.ppm"
        save_image(img, path)
        np.testing.assert_allclose(load_image(path), q, atol=1e-12)

    def test_png_round_trip(self, tmp_path):
        img = make_rng(12).uniform(0, 1, (3, 6, 4))
        q = np.floor(img * 255 + 0.5) / 255.0
        path = tmp_path / "img.png"
        save_image(img, path)
        np.testing.assert_allclose(load_image(path), q, atol=1e-12)

    def test_half_rounds_to_128(self, tmp_path):
        path = tmp_path / "half.ppm"
        save_image(np.full((3, 1, 1), 0.5), path)
        assert path.read_bytes()[-3:] == bytes([128, 128, 128])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P5\n1 1\n255\n\0")
        with pytest.raises(ImageFormatError, match="P5"):
            load_image(path)

    def test_truncated_body(self, tmp_path):
        path = tmp_path / "short.ppm"
        path.write_bytes(b"P6\n2 2\n255\n" + bytes(5))
        with pytest.raises(ImageFormatError, match="truncated"):
            load_image(path)

    def test_unsupported_suffix(self, tmp_path):
        with pytest.raises(ImageFormatError):
            load_image(tmp_path / "img.jpg")

    @settings(deadline=None, max_examples=20)
    @given(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
    def test_ppm_bytes_exact(self, r, g, b):
        import tempfile
        from pathlib import Path
        with tempfile.TemporaryDirectory() as d:
            path = Path(d) / "p.ppm"
            path.write_bytes(b"P6\n1 1\n255\n" + bytes([r, g, b]))
            save_image(load_image(path), path)
            assert path.read_bytes()[-3:] == bytes([r, g, b])


class TestPairRecord:
    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            PairRecord(low=np.zeros((3, 4, 4)), reference=np.zeros((3, 8, 8)),
                       source_id="bad")

    def test_accepted_requires_all_verdicts(self):
        rec = record(8, 8)
        rec.verdicts["brightness"] = brightness_filter(rec.reference)
        rec.verdicts["confidence"] = confidence_filter(
            rec.reference, scorer=lambda img: 0.0)
        assert not rec.accepted

"""UI masking, cropping, Doppler scoring contracts."""

import colorsys

import numpy as np
import pytest

from carovd.errors import CropExceedsHeight, ShapeMismatch, SingleFrameVideo
from carovd.preprocess import (
    Excluded,
    PreprocessConfig,
    UiMask,
    apply_ui_removal,
    compute_ui_mask,
    crop_bottom,
    doppler_score,
    preprocess_video,
)

from .conftest import make_volume


def noisy_frames(rng, t=12, h=80, w=80, c=1, lo=40, hi=216):
    return rng.integers(lo, hi, size=(t, h, w, c), dtype=np.uint8)


class TestComputeUiMask:
    def test_left_half_static_overlay(self, rng):
        frames = noisy_frames(rng, h=80, w=80)
        frames[:, :, :40, :] = 170  # constant text panel
        mask = compute_ui_mask(make_volume(frames), var_threshold=2.0)
        expected = np.zeros((80, 80), dtype=bool)
        expected[:, :40] = True
        assert np.array_equal(mask.mask, expected)

    def test_all_constant_video(self):
        frames = np.full((6, 64, 64, 1), 99, dtype=np.uint8)
        mask = compute_ui_mask(make_volume(frames), var_threshold=2.0)
        assert mask.mask.all()

    def test_alternating_pixel_not_masked(self):
        frames = np.full((10, 64, 64, 1), 128, dtype=np.uint8)
        frames[::2, 5, 7, 0] = 0
        frames[1::2, 5, 7, 0] = 255
        mask = compute_ui_mask(make_volume(frames), var_threshold=10.0)
        assert not mask.mask[5, 7]

    def test_single_frame_rejected(self, rng):
        vol = make_volume(noisy_frames(rng, t=1))
        with pytest.raises(SingleFrameVideo):
            compute_ui_mask(vol)

    def test_deterministic(self, rng):
        vol = make_volume(noisy_frames(rng))
        a = compute_ui_mask(vol)
        b = compute_ui_mask(vol)
        assert np.array_equal(a.mask, b.mask)


class TestApplyUiRemoval:
    def test_all_false_mask_is_identity(self, rng):
        vol = make_volume(noisy_frames(rng))
        mask = UiMask(80, 80, np.zeros((80, 80), dtype=bool))
        assert apply_ui_removal(vol, mask).equals(vol)

    def test_all_true_mask_zeroes_everything(self, rng):
        vol = make_volume(noisy_frames(rng))
        mask = UiMask(80, 80, np.ones((80, 80), dtype=bool))
        out = apply_ui_removal(vol, mask)
        assert not out.frames.any()

    def test_clean_layer_preserved_outside_mask(self, rng):
        clean = noisy_frames(rng)
        overlaid = clean.copy()
        overlay_mask = np.zeros((80, 80), dtype=bool)
        overlay_mask[:20, :] = True
        overlaid[:, overlay_mask, :] = 200
        out = apply_ui_removal(make_volume(overlaid), UiMask(80, 80, overlay_mask))
        assert np.array_equal(out.frames[:, ~overlay_mask, :], clean[:, ~overlay_mask, :])
        assert not out.frames[:, overlay_mask, :].any()

    def test_idempotent(self, rng):
        vol = make_volume(noisy_frames(rng))
        mask = compute_ui_mask(vol)
        once = apply_ui_removal(vol, mask)
        twice = apply_ui_removal(once, mask)
        assert once.equals(twice)

    def test_shape_mismatch(self, rng):
        vol = make_volume(noisy_frames(rng))
        with pytest.raises(ShapeMismatch):
            apply_ui_removal(vol, UiMask(64, 64, np.zeros((64, 64), dtype=bool)))


class TestCropBottom:
    def test_paper_crop_amount(self, rng):
        vol = make_volume(noisy_frames(rng, h=224, w=224))
        out = crop_bottom(vol, 45)
        assert out.meta.height == 179
        assert out.frames.shape[1] == 179
        assert np.array_equal(out.frames, vol.frames[:, :179])

    def test_zero_crop_is_identity(self, rng):
        vol = make_volume(noisy_frames(rng))
        assert crop_bottom(vol, 0).equals(vol)

    def test_crop_exceeding_height(self, rng):
        vol = make_volume(noisy_frames(rng, h=40, w=64))
        with pytest.raises(CropExceedsHeight):
            crop_bottom(vol, 45)

    def test_crop_then_mask_commutes_with_mask_then_crop(self, rng):
        frames = noisy_frames(rng, h=80, w=80)
        frames[:, 10:20, :, :] = 50
        vol = make_volume(frames)
        n = 30
        mask_full = compute_ui_mask(vol)
        a = crop_bottom(apply_ui_removal(vol, mask_full), n)
        cropped = crop_bottom(vol, n)
        mask_restricted = UiMask(80, 80 - n, mask_full.mask[: 80 - n])
        b = apply_ui_removal(cropped, mask_restricted)
        assert a.equals(b)


def hsv_patch_frames(t, h, w, hue_deg, sat, val, rng, patch_fraction):
    """Gray background with a temporally flickering saturated patch."""
    frames = rng.integers(60, 200, size=(t, h, w, 1), dtype=np.uint8)
    frames = np.repeat(frames, 3, axis=3)
    ph = round(np.sqrt(patch_fraction) * h)
    pw = round(patch_fraction * h * w / ph) if ph else 0
    for i in range(t):
        v = val + 0.1 * float(rng.uniform(-0.5, 0.5))
        r, g, b = colorsys.hsv_to_rgb(hue_deg / 360.0, sat, v)
        frames[i, :ph, :pw] = np.array([r, g, b]) * 255.0
    actual_fraction = (ph * pw) / (h * w)
    return frames, actual_fraction


class TestDopplerScore:
    def test_gray_video_scores_zero(self, rng):
        vol = make_volume(noisy_frames(rng))
        verdict = doppler_score(vol)
        assert verdict.red_fraction == 0.0
        assert verdict.blue_fraction == 0.0
        assert not verdict.excluded

    def test_pure_gray_rgb_scores_zero(self):
        frames = np.full((5, 64, 64, 3), 120, dtype=np.uint8)
        verdict = doppler_score(make_volume(frames))
        assert verdict.red_fraction == 0.0
        assert verdict.blue_fraction == 0.0

    def test_ten_percent_red_patch(self, rng):
        frames, actual = hsv_patch_frames(6, 100, 100, 0, 0.95, 0.8, rng, 0.10)
        verdict = doppler_score(make_volume(frames))
        assert verdict.red_fraction == pytest.approx(0.10, abs=0.005)
        assert verdict.red_fraction == pytest.approx(actual, abs=1e-9)

    def test_fully_blue_video(self):
        frames = np.zeros((4, 64, 64, 3), dtype=np.uint8)
        frames[:, :, :, 2] = 255  # pure blue, hue 240
        verdict = doppler_score(make_volume(frames))
        assert verdict.blue_fraction == 1.0
        assert verdict.excluded

    def test_excluded_flag_matches_thresholds(self, rng):
        frames, _ = hsv_patch_frames(6, 100, 100, 230, 0.9, 0.7, rng, 0.05)
        cfg = PreprocessConfig(tau_blue=0.02)
        verdict = doppler_score(make_volume(frames), cfg=cfg)
        assert verdict.excluded == (
            verdict.red_fraction > cfg.tau_red or verdict.blue_fraction > cfg.tau_blue
        )
        assert verdict.excluded


class TestPreprocessVideo:
    def test_doppler_video_excluded(self, rng):
        frames, _ = hsv_patch_frames(8, 100, 100, 0, 0.95, 0.8, rng, 0.20)
        result = preprocess_video(make_volume(frames), PreprocessConfig(tau_red=0.05, crop_px=10))
        assert isinstance(result, Excluded)
        assert result.verdict.red_fraction > 0.15

    def test_clean_video_processed(self, rng):
        clean = noisy_frames(rng, t=10, h=120, w=100)
        frames = clean.copy()
        frames[:, :15, :, :] = 180  # static banner
        cfg = PreprocessConfig(crop_px=20)
        result = preprocess_video(make_volume(frames), cfg)
        assert not isinstance(result, Excluded)
        assert result.meta.height == 100
        assert not result.frames[:, :15, :, :].any()
        assert np.array_equal(result.frames[:, 15:, :, :], clean[:, 15:100, :, :])

    def test_gray_video_never_doppler_excluded(self, rng):
        vol = make_volume(noisy_frames(rng))
        result = preprocess_video(vol, PreprocessConfig(crop_px=5, tau_red=0.0, tau_blue=0.0))
        assert not isinstance(result, Excluded)

"""Clip planning, extraction, normalization, augmentation, class weights."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carovd.errors import AlreadyNormalized, SingleClassDataset, VideoTooShort
from carovd.media.types import ColorMode, Site, VideoMeta
from carovd.sampling import (
    AugConfig,
    ClipTensor,
    NormStats,
    augment,
    class_weights,
    export_clips,
    extract_clip,
    load_exported_clip,
    normalize,
    plan_clips,
    window_length,
)

from .conftest import make_volume


def meta(fps=30.0, frame_count=300, w=224, h=224):
    return VideoMeta(
        video_id="v",
        individual_id="i",
        site=Site.CCA_L,
        fps=fps,
        frame_count=frame_count,
        width=w,
        height=h,
        color=ColorMode.GRAY8,
    )


class TestPlanClips:
    def test_window_63_frames_at_30fps(self):
        plans = plan_clips(meta(fps=30.0, frame_count=300), n_clips=5, seed=7)
        assert window_length(300, 30.0) == 63
        for p in plans:
            assert p.frame_indices[-1] - p.frame_indices[0] + 1 == 63
            assert p.frame_indices[0] == p.start_frame

    def test_forced_window_when_exactly_16_frames(self):
        plans = plan_clips(meta(fps=123.4, frame_count=16), n_clips=3, seed=1)
        for p in plans:
            assert p.frame_indices == tuple(range(16))

    def test_deterministic_for_seed(self):
        m = meta()
        assert plan_clips(m, 4, seed=42) == plan_clips(m, 4, seed=42)
        assert plan_clips(m, 4, seed=42) != plan_clips(m, 4, seed=43)

    def test_too_short_video(self):
        with pytest.raises(VideoTooShort):
            plan_clips(meta(frame_count=15), 1)

    @given(
        fps=st.floats(min_value=1.0, max_value=240.0, allow_nan=False),
        frame_count=st.integers(min_value=16, max_value=2000),
        n_clips=st.integers(min_value=1, max_value=8),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    @settings(max_examples=300, deadline=None)
    def test_indices_always_in_range(self, fps, frame_count, n_clips, seed):
        plans = plan_clips(meta(fps=fps, frame_count=frame_count), n_clips, seed=seed)
        w = min(frame_count, round(2.1 * fps))
        for p in plans:
            assert all(0 <= i < frame_count for i in p.frame_indices)
            assert p.frame_indices[-1] - p.frame_indices[0] + 1 == w
            assert list(p.frame_indices) == sorted(p.frame_indices)


class TestExtractClip:
    def test_constant_input_constant_output(self, rng):
        frames = np.full((20, 180, 240, 1), 73, dtype=np.uint8)
        vol = make_volume(frames)
        plan = plan_clips(vol.meta, 1, seed=0)[0]
        clip = extract_clip(vol, plan)
        assert clip.data.shape == (16, 224, 224, 3)
        assert np.allclose(clip.data, 73.0)

    def test_identity_geometry_is_bit_equal(self, rng):
        frames = rng.integers(0, 256, size=(16, 224, 224, 3), dtype=np.uint8)
        vol = make_volume(frames)
        plan = plan_clips(vol.meta, 1, seed=3)[0]
        # 16 frames forces the full-video window and the identity index map
        clip = extract_clip(vol, plan)
        assert np.array_equal(clip.data, frames.astype(np.float32))

    def test_centered_square_geometry(self):
        frames = np.zeros((16, 448, 448, 1), dtype=np.uint8)
        frames[:, 112:336, 112:336, :] = 255
        vol = make_volume(frames)
        plan = plan_clips(vol.meta, 1, seed=0)[0]
        clip = extract_clip(vol, plan)
        bright = clip.data[0, :, :, 0] > 127
        rows = np.where(bright.any(axis=1))[0]
        cols = np.where(bright.any(axis=0))[0]
        assert abs(rows[0] - 56) <= 1 and abs(rows[-1] - 167) <= 1
        assert abs(cols[0] - 56) <= 1 and abs(cols[-1] - 167) <= 1

    def test_gray_channels_replicated(self, rng):
        frames = rng.integers(0, 256, size=(20, 224, 224, 1), dtype=np.uint8)
        vol = make_volume(frames)
        clip = extract_clip(vol, plan_clips(vol.meta, 1, seed=1)[0])
        assert np.array_equal(clip.data[..., 0], clip.data[..., 1])
        assert np.array_equal(clip.data[..., 0], clip.data[..., 2])

    def test_eval_path_bit_stable(self, rng):
        frames = rng.integers(0, 256, size=(40, 140, 200, 3), dtype=np.uint8)
        vol = make_volume(frames)
        plan = plan_clips(vol.meta, 1, seed=9)[0]
        a = extract_clip(vol, plan)
        b = extract_clip(vol, plan)
        assert np.array_equal(a.data, b.data)


class TestNormalize:
    def test_identity_stats(self, rng):
        frames = rng.integers(0, 256, size=(20, 224, 224, 3), dtype=np.uint8)
        vol = make_volume(frames)
        clip = extract_clip(vol, plan_clips(vol.meta, 1, seed=0)[0])
        out = normalize(clip, NormStats((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)))
        assert np.allclose(out.data, clip.data / 255.0, atol=1e-7)
        assert out.normalized

    def test_centering_constant_clip(self):
        mu = 0.4
        frames = np.full((16, 224, 224, 3), round(255 * mu), dtype=np.uint8)
        vol = make_volume(frames)
        clip = extract_clip(vol, plan_clips(vol.meta, 1, seed=0)[0])
        stats = NormStats((round(255 * mu) / 255.0,) * 3, (0.5, 0.5, 0.5))
        out = normalize(clip, stats)
        assert np.allclose(out.data, 0.0, atol=1e-6)

    def test_inverse_property(self, rng):
        frames = rng.integers(0, 256, size=(18, 224, 224, 3), dtype=np.uint8)
        vol = make_volume(frames)
        clip = extract_clip(vol, plan_clips(vol.meta, 1, seed=0)[0])
        stats = NormStats((0.485, 0.456, 0.406), (0.229, 0.224, 0.225))
        out = normalize(clip, stats)
        recovered = out.data * np.array(stats.std, dtype=np.float32) + np.array(
            stats.mean, dtype=np.float32
        )
        assert np.abs(recovered - clip.data / 255.0).max() <= 1e-6

    def test_double_normalize_rejected(self, rng):
        frames = rng.integers(0, 256, size=(16, 224, 224, 3), dtype=np.uint8)
        vol = make_volume(frames)
        clip = extract_clip(vol, plan_clips(vol.meta, 1, seed=0)[0])
        stats = NormStats((0.5, 0.5, 0.5), (0.25, 0.25, 0.25))
        once = normalize(clip, stats)
        with pytest.raises(AlreadyNormalized):
            normalize(once, stats)


class TestAugment:
    def _clip(self, rng):
        frames = rng.integers(0, 256, size=(24, 224, 224, 3), dtype=np.uint8)
        vol = make_volume(frames)
        return extract_clip(vol, plan_clips(vol.meta, 1, seed=0)[0])

    def test_degenerate_config_with_no_flip_is_identity(self, rng):
        clip = self._clip(rng)
        out = augment(clip, AugConfig(scale_min=1.0, scale_max=1.0, flip_p=0.0), seed=5)
        assert np.array_equal(out.data, clip.data)

    def test_symmetric_clip_unchanged_by_flip(self, rng):
        half = np.asarray(
            np.random.default_rng(0).integers(0, 256, size=(16, 224, 112, 3)), dtype=np.float32
        )
        data = np.concatenate([half, half[:, :, ::-1, :]], axis=2)
        plan = plan_clips(meta(frame_count=16), 1, seed=0)[0]
        clip = ClipTensor(data=data, normalized=False, plan=plan)
        out = augment(clip, AugConfig(scale_min=1.0, scale_max=1.0, flip_p=1.0), seed=0)
        assert np.array_equal(out.data, clip.data)

    def test_same_seed_same_output(self, rng):
        clip = self._clip(rng)
        cfg = AugConfig()
        a = augment(clip, cfg, seed=11)
        b = augment(clip, cfg, seed=11)
        assert np.array_equal(a.data, b.data)

    def test_different_seeds_differ(self, rng):
        clip = self._clip(rng)
        cfg = AugConfig(scale_min=1.05, scale_max=1.3)
        a = augment(clip, cfg, seed=1)
        b = augment(clip, cfg, seed=2)
        assert not np.array_equal(a.data, b.data)

    def test_output_shape_fixed(self, rng):
        clip = self._clip(rng)
        for seed in range(5):
            out = augment(clip, AugConfig(), seed=seed)
            assert out.data.shape == (16, 224, 224, 3)


class TestClassWeights:
    def test_balanced_labels_give_unit_weights(self):
        assert np.allclose(class_weights([0, 0, 1, 1]), [1.0, 1.0, 1.0, 1.0])

    def test_three_one_imbalance(self):
        w = class_weights([0, 0, 0, 1])
        assert np.allclose(w, [2 / 3, 2 / 3, 2 / 3, 2.0])

    def test_single_class_rejected(self):
        with pytest.raises(SingleClassDataset):
            class_weights([1, 1, 1])

    def test_expected_draw_probability_balanced(self):
        rng = np.random.default_rng(99)
        labels = np.array([1] * 20 + [0] * 1000)
        w = class_weights(list(labels))
        draws = rng.choice(labels, size=100_000, p=w / w.sum())
        assert 0.48 <= draws.mean() <= 0.52


class TestExport:
    def test_roundtrip(self, tmp_path, rng):
        frames = rng.integers(0, 256, size=(20, 224, 224, 3), dtype=np.uint8)
        vol = make_volume(frames)
        clip = extract_clip(vol, plan_clips(vol.meta, 1, seed=0)[0])
        index = export_clips([(clip, "ind-1", 1)], tmp_path)
        lines = index.read_text().splitlines()
        assert len(lines) == 1
        import json

        rec = json.loads(lines[0])
        assert rec["individual_id"] == "ind-1"
        assert rec["label"] == 1
        loaded = load_exported_clip(tmp_path / rec["file"])
        assert np.array_equal(loaded, clip.data)

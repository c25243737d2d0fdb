"""Fixed-length clip extraction, normalization, augmentation, class weights.

A clip is 16 frames spread evenly over a window covering 2.1 seconds of
video (or the whole video when shorter), resized so its short side is 224
and center-cropped to 224x224. Augmentation (train-export path only) adds
seeded short-side scaling, random cropping and horizontal flipping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AlreadyNormalized,
    IndexOutOfRange,
    SingleClassDataset,
    VideoTooShort,
)
from .media.types import FrameVolume, VideoMeta

CLIP_LEN = 16
CLIP_DURATION_S = 2.1
OUT_SIZE = 224


@dataclass(frozen=True)
class ClipIndexPlan:
    video_id: str
    start_frame: int
    frame_indices: tuple[int, ...]
    seed: int

    def __post_init__(self) -> None:
        if len(self.frame_indices) != CLIP_LEN:
            raise ValueError(f"expected {CLIP_LEN} indices, got {len(self.frame_indices)}")
        if any(b < a for a, b in zip(self.frame_indices, self.frame_indices[1:])):
            raise ValueError("frame indices must be nondecreasing")


@dataclass(eq=False)
class ClipTensor:
    """(16, 224, 224, 3) float32 tensor plus its provenance plan."""

    data: np.ndarray
    normalized: bool
    plan: ClipIndexPlan

    def __post_init__(self) -> None:
        if self.data.shape != (CLIP_LEN, OUT_SIZE, OUT_SIZE, 3):
            raise ValueError(f"clip shape must be (16, 224, 224, 3), got {self.data.shape}")


@dataclass(frozen=True)
class NormStats:
    mean: tuple[float, float, float]
    std: tuple[float, float, float]

    def __post_init__(self) -> None:
        if any(s <= 0 for s in self.std):
            raise ValueError(f"std must be positive, got {self.std}")


@dataclass(frozen=True)
class AugConfig:
    scale_min: float = 1.0
    scale_max: float = 1.33
    flip_p: float = 0.5

    def __post_init__(self) -> None:
        if self.scale_min < 1.0 or self.scale_max < self.scale_min:
            raise ValueError("scale range must satisfy 1.0 <= scale_min <= scale_max")


def window_length(frame_count: int, fps: float, duration_s: float = CLIP_DURATION_S) -> int:
    """Frames covered by one clip: the stated duration, capped by the video."""
    return min(frame_count, round(duration_s * fps))


def plan_clips(
    meta: VideoMeta,
    n_clips: int,
    clip_len: int = CLIP_LEN,
    duration_s: float = CLIP_DURATION_S,
    seed: int = 0,
) -> list[ClipIndexPlan]:
    """Uniformly place n_clips windows and spread 16 indices over each.

    Start frames are drawn with a seeded generator from [0, frame_count - W];
    indices within a window are round(linspace(start, start + W - 1, 16)).
    Deterministic for a given (meta, n_clips, seed).
    """
    if clip_len != CLIP_LEN:
        raise ValueError("clip length is fixed at 16")
    if n_clips < 1:
        raise ValueError("n_clips must be >= 1")
    if meta.frame_count < clip_len:
        raise VideoTooShort(f"{meta.video_id}: {meta.frame_count} frames < {clip_len}")

    w = window_length(meta.frame_count, meta.fps, duration_s)
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, meta.frame_count - w + 1, size=n_clips)
    plans = []
    for start in starts:
        idx = np.rint(np.linspace(start, start + w - 1, clip_len)).astype(np.int64)
        plans.append(
            ClipIndexPlan(
                video_id=meta.video_id,
                start_frame=int(start),
                frame_indices=tuple(int(i) for i in idx),
                seed=seed,
            )
        )
    return plans


def _resize_bilinear(frames: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resize of a (T, H, W, C) float32 stack.

    Half-pixel-center sampling; an identity-size call returns the input
    values exactly (interpolation weights collapse to 0).
    """
    t, h, w, c = frames.shape
    if (h, w) == (out_h, out_w):
        return frames

    def axis_coords(src: int, dst: int):
        x = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
        x = np.clip(x, 0.0, src - 1.0)
        lo = np.floor(x).astype(np.int64)
        hi = np.minimum(lo + 1, src - 1)
        frac = (x - lo).astype(np.float32)
        return lo, hi, frac

    # rows
    lo, hi, frac = axis_coords(h, out_h)
    rows = frames[:, lo, :, :] * (1.0 - frac)[None, :, None, None] + frames[
        :, hi, :, :
    ] * frac[None, :, None, None]
    # cols
    lo, hi, frac = axis_coords(w, out_w)
    out = rows[:, :, lo, :] * (1.0 - frac)[None, None, :, None] + rows[
        :, :, hi, :
    ] * frac[None, None, :, None]
    return out.astype(np.float32)


def _short_side_resize(frames: np.ndarray, target: int) -> np.ndarray:
    t, h, w, c = frames.shape
    if h <= w:
        new_h = target
        new_w = round(w * target / h)
    else:
        new_w = target
        new_h = round(h * target / w)
    return _resize_bilinear(frames, new_h, new_w)


def _center_crop(frames: np.ndarray, size: int) -> np.ndarray:
    t, h, w, c = frames.shape
    top = (h - size) // 2
    left = (w - size) // 2
    return frames[:, top : top + size, left : left + size, :]


def extract_clip(volume: FrameVolume, plan: ClipIndexPlan, out_size: int = OUT_SIZE) -> ClipTensor:
    """Gather planned frames, short-side resize, center crop; channels
    replicated for grayscale input. Deterministic (evaluation path)."""
    if out_size != OUT_SIZE:
        raise ValueError("output size is fixed at 224")
    idx = np.asarray(plan.frame_indices)
    if idx.max() >= volume.meta.frame_count or idx.min() < 0:
        raise IndexOutOfRange(
            f"{plan.video_id}: plan indexes up to {int(idx.max())} "
            f"of {volume.meta.frame_count} frames"
        )
    frames = volume.frames[idx].astype(np.float32)
    if frames.shape[3] == 1:
        frames = np.repeat(frames, 3, axis=3)
    frames = _short_side_resize(frames, out_size)
    frames = _center_crop(frames, out_size)
    return ClipTensor(data=np.ascontiguousarray(frames), normalized=False, plan=plan)


def normalize(clip: ClipTensor, stats: NormStats) -> ClipTensor:
    """Scale to [0, 1] then center/scale per channel: (x/255 - mean) / std."""
    if clip.normalized:
        raise AlreadyNormalized(f"clip for {clip.plan.video_id} already normalized")
    mean = np.asarray(stats.mean, dtype=np.float32)
    std = np.asarray(stats.std, dtype=np.float32)
    data = (clip.data / np.float32(255.0) - mean) / std
    return ClipTensor(data=data, normalized=True, plan=clip.plan)


def augment(clip: ClipTensor, cfg: AugConfig, seed: int) -> ClipTensor:
    """Seeded training-path augmentation: short-side scale, random crop, flip.

    Draw order is fixed (scale, top, left, flip) so a seed fully determines
    the output.
    """
    rng = np.random.default_rng(seed)
    scale = rng.uniform(cfg.scale_min, cfg.scale_max)
    target = max(OUT_SIZE, round(scale * OUT_SIZE))

    frames = _short_side_resize(clip.data, target)
    t, h, w, c = frames.shape
    top = int(rng.integers(0, h - OUT_SIZE + 1))
    left = int(rng.integers(0, w - OUT_SIZE + 1))
    frames = frames[:, top : top + OUT_SIZE, left : left + OUT_SIZE, :]
    if rng.random() < cfg.flip_p:
        frames = frames[:, :, ::-1, :]
    return ClipTensor(
        data=np.ascontiguousarray(frames), normalized=clip.normalized, plan=clip.plan
    )


def class_weights(labels: list[int]) -> np.ndarray:
    """Per-sample weights N / (2 * N_class) balancing expected class draws."""
    arr = np.asarray(labels)
    n = arr.size
    n_pos = int((arr == 1).sum())
    n_neg = int((arr == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassDataset("both classes required for weighting")
    weights = np.where(arr == 1, n / (2.0 * n_pos), n / (2.0 * n_neg))
    return weights


# --- clip export (bridge to the training harness) --------------------------

def export_clips(
    clips: list[tuple[ClipTensor, str, int]],
    out_dir: str | Path,
) -> Path:
    """Write clips as raw little-endian float32 (T,H,W,C) plus an index file.

    `clips` holds (tensor, individual_id, label) triples; tensors must be
    unnormalized so the consumer applies its own model-card stats. The index
    is JSON-lines: one record per clip with file, video_id, individual_id,
    label, seed, frame_indices.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i, (clip, individual_id, label) in enumerate(clips):
        if clip.normalized:
            raise ValueError("export expects unnormalized clips")
        name = f"clip_{i:06d}.f32"
        data = np.ascontiguousarray(clip.data, dtype="<f4")
        (out_dir / name).write_bytes(data.tobytes())
        records.append(
            {
                "file": name,
                "video_id": clip.plan.video_id,
                "individual_id": individual_id,
                "label": int(label),
                "seed": clip.plan.seed,
                "frame_indices": list(clip.plan.frame_indices),
            }
        )
    index_path = out_dir / "index.jsonl"
    with open(index_path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return index_path


def load_exported_clip(path: str | Path) -> np.ndarray:
    data = np.frombuffer(Path(path).read_bytes(), dtype="<f4")
    return data.reshape(CLIP_LEN, OUT_SIZE, OUT_SIZE, 3)

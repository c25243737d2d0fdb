"""Static-overlay removal, heartline crop, and Doppler exclusion.

The device UI (text, scale bars, the ECG heartline) is static over time
while tissue speckle is not, so a per-pixel temporal-variance threshold
separates the two. Doppler recordings are detected by the fraction of
saturated red/blue pixels in HSV space and excluded entirely.

Pipeline order (preprocess_video): doppler check -> UI mask -> mask apply
-> bottom crop.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import CropExceedsHeight, ShapeMismatch, SingleFrameVideo
from .media.types import ColorMode, FrameVolume


@dataclass(frozen=True)
class PreprocessConfig:
    """Thresholds for the cleaning stage; all values are configurable.

    The variance threshold is in squared 8-bit intensity units. Hue bands
    are degrees on the HSV circle; saturation/value minimums and the
    red/blue area thresholds are fractions in [0, 1].
    """

    var_threshold: float = 2.0
    crop_px: int = 45
    red_hue_below: float = 20.0
    red_hue_above: float = 340.0
    blue_hue_low: float = 200.0
    blue_hue_high: float = 260.0
    sat_min: float = 0.3
    val_min: float = 0.2
    tau_red: float = 0.02
    tau_blue: float = 0.02

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "PreprocessConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name in mapping:
                raw = mapping[f.name]
                kwargs[f.name] = int(raw) if f.name == "crop_px" else float(raw)
        return cls(**kwargs)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(eq=False)
class UiMask:
    """Boolean (H, W) mask; True marks static UI/overlay pixels."""

    width: int
    height: int
    mask: np.ndarray

    def __post_init__(self) -> None:
        if self.mask.shape != (self.height, self.width):
            raise ShapeMismatch(
                f"mask shape {self.mask.shape} != ({self.height}, {self.width})"
            )
        if self.mask.dtype != bool:
            raise ValueError("mask must be boolean")


@dataclass(frozen=True)
class DopplerVerdict:
    red_fraction: float
    blue_fraction: float
    excluded: bool


@dataclass(frozen=True)
class Excluded:
    """Sentinel return for a Doppler-excluded video."""

    verdict: DopplerVerdict


def compute_ui_mask(volume: FrameVolume, var_threshold: float = 2.0) -> UiMask:
    """Mark pixels whose channel-mean intensity varies at most var_threshold over time.

    Variance is the population variance across frames of the per-pixel gray
    value (channel mean for RGB).
    """
    if volume.meta.frame_count < 2:
        raise SingleFrameVideo("temporal variance needs at least 2 frames")
    gray = volume.frames.astype(np.float64).mean(axis=3)  # (T, H, W)
    variance = gray.var(axis=0)
    return UiMask(
        width=volume.meta.width,
        height=volume.meta.height,
        mask=variance <= var_threshold,
    )


def apply_ui_removal(volume: FrameVolume, ui_mask: UiMask) -> FrameVolume:
    """Zero masked pixels in every frame; unmasked pixels pass through."""
    meta = volume.meta
    if (ui_mask.height, ui_mask.width) != (meta.height, meta.width):
        raise ShapeMismatch(
            f"mask {ui_mask.height}x{ui_mask.width} vs frames {meta.height}x{meta.width}"
        )
    frames = volume.frames.copy()
    frames[:, ui_mask.mask, :] = 0
    return FrameVolume(meta=meta, frames=frames)


def crop_bottom(volume: FrameVolume, n: int) -> FrameVolume:
    """Drop the bottom n pixel rows (heartline band) from every frame."""
    if n < 0:
        raise ValueError(f"crop must be non-negative, got {n}")
    height = volume.meta.height
    if n >= height:
        raise CropExceedsHeight(f"crop {n} >= height {height}")
    if n == 0:
        return volume
    return volume.with_frames(volume.frames[:, : height - n, :, :].copy(), height=height - n)


def _rgb_to_hsv_pooled(frames: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized HSV over all pixels of all frames; hue in degrees."""
    rgb = frames.reshape(-1, 3).astype(np.float64) / 255.0
    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    maxc = rgb.max(axis=1)
    minc = rgb.min(axis=1)
    delta = maxc - minc

    hue = np.zeros_like(maxc)
    nz = delta > 0
    rmax = nz & (maxc == r)
    gmax = nz & ~rmax & (maxc == g)
    bmax = nz & ~rmax & ~gmax
    hue[rmax] = np.mod((g[rmax] - b[rmax]) / delta[rmax], 6.0)
    hue[gmax] = (b[gmax] - r[gmax]) / delta[gmax] + 2.0
    hue[bmax] = (r[bmax] - g[bmax]) / delta[bmax] + 4.0
    hue *= 60.0

    sat = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    return hue, sat, maxc


def doppler_score(
    volume: FrameVolume,
    sat_min: float = 0.3,
    val_min: float = 0.2,
    cfg: PreprocessConfig | None = None,
) -> DopplerVerdict:
    """Fractions of red/blue saturated pixels pooled over the whole video.

    GRAY8 videos score zero by definition. The verdict's `excluded` flag
    applies the tau thresholds from cfg (defaults when omitted).
    """
    cfg = cfg or PreprocessConfig(sat_min=sat_min, val_min=val_min)
    if volume.meta.color is ColorMode.GRAY8:
        return DopplerVerdict(red_fraction=0.0, blue_fraction=0.0, excluded=False)

    hue, sat, val = _rgb_to_hsv_pooled(volume.frames)
    strong = (sat >= cfg.sat_min) & (val >= cfg.val_min)
    red = strong & ((hue < cfg.red_hue_below) | (hue > cfg.red_hue_above))
    blue = strong & (hue >= cfg.blue_hue_low) & (hue <= cfg.blue_hue_high)

    total = hue.size
    red_fraction = float(red.sum()) / total
    blue_fraction = float(blue.sum()) / total
    return DopplerVerdict(
        red_fraction=red_fraction,
        blue_fraction=blue_fraction,
        excluded=bool(red_fraction > cfg.tau_red or blue_fraction > cfg.tau_blue),
    )


def preprocess_video(
    volume: FrameVolume, cfg: PreprocessConfig | None = None
) -> FrameVolume | Excluded:
    """Full cleaning pass for one video.

    Returns Excluded(verdict) when the Doppler fractions exceed the
    thresholds; otherwise the masked, cropped volume.
    """
    cfg = cfg or PreprocessConfig()
    verdict = doppler_score(volume, cfg=cfg)
    if verdict.excluded:
        return Excluded(verdict)
    ui_mask = compute_ui_mask(volume, cfg.var_threshold)
    cleaned = apply_ui_removal(volume, ui_mask)
    return crop_bottom(cleaned, cfg.crop_px)

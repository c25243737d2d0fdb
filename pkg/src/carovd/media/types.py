"""Core media types: video metadata and decoded frame stacks."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np


class Site(Enum):
    """Carotid acquisition site. Parsing is total: unknown tokens map to UNKNOWN."""

    CCA_L = "CCA_L"
    CCA_R = "CCA_R"
    ECA_L = "ECA_L"
    ECA_R = "ECA_R"
    ICA_L = "ICA_L"
    ICA_R = "ICA_R"
    UNKNOWN = "UNKNOWN"


def parse_site(token: str | None) -> Site:
    """Map a free-text site token to a Site; never raises."""
    if not token:
        return Site.UNKNOWN
    norm = token.strip().upper().replace("-", "_").replace(" ", "_")
    try:
        return Site(norm)
    except ValueError:
        return Site.UNKNOWN


class ColorMode(Enum):
    GRAY8 = "GRAY8"
    RGB8 = "RGB8"

    @property
    def channels(self) -> int:
        return 1 if self is ColorMode.GRAY8 else 3


MIN_FRAME_EDGE = 64  # smallest width/height the pipeline accepts


@dataclass(frozen=True)
class VideoMeta:
    video_id: str
    individual_id: str
    site: Site
    fps: float
    frame_count: int
    width: int
    height: int
    color: ColorMode

    def validate(self) -> "VideoMeta":
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.frame_count < 1:
            raise ValueError(f"frame_count must be >= 1, got {self.frame_count}")
        if self.width < MIN_FRAME_EDGE or self.height < MIN_FRAME_EDGE:
            raise ValueError(
                f"frames must be at least {MIN_FRAME_EDGE}px per side, "
                f"got {self.width}x{self.height}"
            )
        return self


@dataclass(eq=False)
class FrameVolume:
    """Decoded frame stack, frame-major uint8 array of shape (T, H, W, C).

    Immutable by convention: operations return new volumes.
    """

    meta: VideoMeta
    frames: np.ndarray

    def __post_init__(self) -> None:
        f = self.frames
        if f.dtype != np.uint8:
            raise ValueError(f"frames must be uint8, got {f.dtype}")
        if f.ndim != 4:
            raise ValueError(f"frames must be (T, H, W, C), got shape {f.shape}")
        t, h, w, c = f.shape
        m = self.meta
        if t != m.frame_count or h != m.height or w != m.width:
            raise ValueError(
                f"frames shape {f.shape} disagrees with meta "
                f"({m.frame_count}, {m.height}, {m.width}, ...)"
            )
        if c != m.color.channels:
            raise ValueError(f"{m.color.value} expects {m.color.channels} channels, got {c}")

    def equals(self, other: "FrameVolume") -> bool:
        return self.meta == other.meta and np.array_equal(self.frames, other.frames)

    def with_frames(self, frames: np.ndarray, **meta_changes) -> "FrameVolume":
        return FrameVolume(meta=replace(self.meta, **meta_changes), frames=frames)

import numpy as np
import pytest

from carovd.media.types import ColorMode, FrameVolume, Site, VideoMeta


def make_volume(
    frames: np.ndarray,
    video_id: str = "vid-0",
    individual_id: str = "ind-0",
    site: Site = Site.CCA_L,
    fps: float = 30.0,
) -> FrameVolume:
    t, h, w, c = frames.shape
    color = ColorMode.GRAY8 if c == 1 else ColorMode.RGB8
    meta = VideoMeta(
        video_id=video_id,
        individual_id=individual_id,
        site=site,
        fps=fps,
        frame_count=t,
        width=w,
        height=h,
        color=color,
    )
    return FrameVolume(meta=meta, frames=frames)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

from .ingest import load_video, probe_metadata
from .types import ColorMode, FrameVolume, Site, VideoMeta, parse_site

__all__ = [
    "ColorMode",
    "FrameVolume",
    "Site",
    "VideoMeta",
    "load_video",
    "parse_site",
    "probe_metadata",
]

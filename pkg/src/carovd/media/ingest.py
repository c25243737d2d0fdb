"""Format dispatch: probe and decode either supported container."""

from __future__ import annotations

from pathlib import Path

from ..errors import CorruptHeader, UnreadableFile, UnsupportedFormat
from . import dicom, framedir
from .types import FrameVolume, VideoMeta


def probe_metadata(path: str | Path) -> VideoMeta:
    """Container metadata without decoding pixel data.

    Frame rate defaults to 30 fps (with a logged warning) when the container
    carries none, so clip planning stays total.
    """
    path = Path(path)
    if not path.exists():
        raise UnreadableFile(f"{path}: does not exist")
    if path.is_dir():
        if framedir.is_framedir(path):
            return framedir.probe_framedir(path)
        raise UnsupportedFormat(f"{path}: directory without a manifest file")
    if not path.is_file():
        raise UnreadableFile(f"{path}: not a regular file or directory")
    if path.stat().st_size == 0:
        raise CorruptHeader(f"{path}: file is empty")
    if dicom.is_dicom(path):
        return dicom.probe_dicom(path)
    if path.suffix.lower() == ".dcm":
        raise CorruptHeader(f"{path}: .dcm file without DICM magic")
    raise UnsupportedFormat(f"{path}: neither DICOM subset nor frame-sequence directory")


def load_video(path: str | Path) -> FrameVolume:
    """Fully decode a video. Decoding is deterministic and bit-exact."""
    path = Path(path)
    probe_metadata(path)
    if path.is_dir():
        return framedir.load_framedir(path)
    return dicom.load_dicom(path)

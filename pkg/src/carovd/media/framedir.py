"""Frame-sequence fallback format: a directory of PNG frames plus a manifest.

Layout:
    <dir>/manifest            UTF-8 `key=value` lines (# comments allowed)
    <dir>/frame_000000.png    zero-padded, contiguous from 0, lossless

Manifest keys: video_id, individual_id, site, fps, and optionally
frame_count (validated against the files found when present).
"""

from __future__ import annotations

import logging
import re
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import CorruptHeader, UnsupportedFormat
from .types import ColorMode, FrameVolume, VideoMeta, parse_site

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest"
FRAME_PATTERN = re.compile(r"^frame_(\d{6})\.png$")
DEFAULT_FPS = 30.0


def is_framedir(path: Path) -> bool:
    return path.is_dir() and (path / MANIFEST_NAME).is_file()


def _read_manifest(path: Path) -> dict[str, str]:
    manifest_path = path / MANIFEST_NAME
    entries: dict[str, str] = {}
    for lineno, line in enumerate(manifest_path.read_text("utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CorruptHeader(f"{manifest_path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def _frame_files(path: Path) -> list[Path]:
    found: dict[int, Path] = {}
    for child in path.iterdir():
        m = FRAME_PATTERN.match(child.name)
        if m:
            found[int(m.group(1))] = child
    if not found:
        raise CorruptHeader(f"{path}: no frame_NNNNNN.png files")
    indices = sorted(found)
    if indices != list(range(len(indices))):
        raise CorruptHeader(f"{path}: frame numbering has gaps")
    return [found[i] for i in indices]


def write_framedir(volume: FrameVolume, path: str | Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = volume.meta
    lines = [
        f"video_id={meta.video_id}",
        f"individual_id={meta.individual_id}",
        f"site={meta.site.value}",
        f"fps={meta.fps:.10g}",
        f"frame_count={meta.frame_count}",
    ]
    (path / MANIFEST_NAME).write_text("\n".join(lines) + "\n", "utf-8")
    for i in range(meta.frame_count):
        frame = volume.frames[i]
        if meta.color is ColorMode.GRAY8:
            img = Image.fromarray(frame[:, :, 0], mode="L")
        else:
            img = Image.fromarray(frame, mode="RGB")
        img.save(path / f"frame_{i:06d}.png")
    return path


def probe_framedir(path: str | Path) -> VideoMeta:
    path = Path(path)
    manifest = _read_manifest(path)
    frames = _frame_files(path)

    declared = manifest.get("frame_count")
    if declared is not None and int(declared) != len(frames):
        raise CorruptHeader(
            f"{path}: manifest declares {declared} frames, found {len(frames)}"
        )

    fps_raw = manifest.get("fps")
    if fps_raw is None:
        log.warning("%s: manifest has no fps, defaulting to %s", path, DEFAULT_FPS)
        fps = DEFAULT_FPS
    else:
        try:
            fps = float(fps_raw)
        except ValueError as exc:
            raise CorruptHeader(f"{path}: bad fps {fps_raw!r}") from exc
        if fps <= 0:
            raise CorruptHeader(f"{path}: fps must be positive, got {fps}")

    with Image.open(frames[0]) as first:
        width, height = first.size
        mode = first.mode
    if mode == "L":
        color = ColorMode.GRAY8
    elif mode == "RGB":
        color = ColorMode.RGB8
    else:
        raise UnsupportedFormat(f"{path}: frame mode {mode!r}; only L and RGB supported")

    meta = VideoMeta(
        video_id=manifest.get("video_id", path.name),
        individual_id=manifest.get("individual_id", manifest.get("video_id", path.name)),
        site=parse_site(manifest.get("site")),
        fps=fps,
        frame_count=len(frames),
        width=width,
        height=height,
        color=color,
    )
    try:
        return meta.validate()
    except ValueError as exc:
        raise UnsupportedFormat(f"{path}: {exc}") from exc


def load_framedir(path: str | Path) -> FrameVolume:
    path = Path(path)
    meta = probe_framedir(path)
    stack = np.empty(
        (meta.frame_count, meta.height, meta.width, meta.color.channels), dtype=np.uint8
    )
    for i, frame_path in enumerate(_frame_files(path)):
        with Image.open(frame_path) as img:
            arr = np.asarray(img, dtype=np.uint8)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.shape != stack.shape[1:]:
            raise CorruptHeader(
                f"{frame_path}: frame shape {arr.shape} differs from first frame"
            )
        stack[i] = arr
    return FrameVolume(meta=meta, frames=stack)

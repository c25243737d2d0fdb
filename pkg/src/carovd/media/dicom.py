"""Narrow DICOM codec: uncompressed, explicit-VR little-endian, multi-frame, 8-bit.

Covers exactly what carotid cine loops need: pixel extraction plus the
handful of tags carrying ids, frame rate and geometry. Anything outside the
subset (compressed transfer syntaxes, implicit VR, >8-bit) is rejected with
a precise error rather than half-decoded.

Tag usage in this profile:
    (0008,103E) SeriesDescription        acquisition site token
    (0010,0020) PatientID                individual id
    (0018,0040) CineRate                 frames/second (integer)
    (0018,1063) FrameTime                ms/frame, fps fallback
    (0020,4000) ImageComments            video id
    (0028,*)    geometry + pixel format
    (7FE0,0010) PixelData                frame-major interleaved bytes
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import (
    CorruptHeader,
    PixelDataTruncated,
    UnsupportedFormat,
    UnsupportedTransferSyntax,
)
from .types import ColorMode, VideoMeta, parse_site

log = logging.getLogger(__name__)

DICOM_MAGIC = b"DICM"
PREAMBLE_LEN = 128

EXPLICIT_VR_LE = "1.2.840.10008.1.2.1"
IMPLICIT_VR_LE = "1.2.840.10008.1.2"
EXPLICIT_VR_BE = "1.2.840.10008.1.2.2"

SOP_CLASS_US_MULTIFRAME = "1.2.840.10008.5.1.4.1.1.3.1"
IMPLEMENTATION_UID = "2.25.313198575932555370153831316"

# VRs whose header carries a 2-byte reserved field and a 4-byte length.
_LONG_VRS = {b"OB", b"OW", b"OF", b"SQ", b"UT", b"UN"}

DEFAULT_FPS = 30.0

TAG_SERIES_DESC = (0x0008, 0x103E)
TAG_PATIENT_ID = (0x0010, 0x0020)
TAG_CINE_RATE = (0x0018, 0x0040)
TAG_FRAME_TIME = (0x0018, 0x1063)
TAG_IMAGE_COMMENTS = (0x0020, 0x4000)
TAG_SAMPLES_PER_PIXEL = (0x0028, 0x0002)
TAG_PHOTOMETRIC = (0x0028, 0x0004)
TAG_PLANAR_CONFIG = (0x0028, 0x0006)
TAG_NUMBER_OF_FRAMES = (0x0028, 0x0008)
TAG_ROWS = (0x0028, 0x0010)
TAG_COLS = (0x0028, 0x0011)
TAG_BITS_ALLOCATED = (0x0028, 0x0100)
TAG_PIXEL_DATA = (0x7FE0, 0x0010)
TAG_SOP_INSTANCE_UID = (0x0008, 0x0018)


# --- writing ---------------------------------------------------------------

def _pad_even(value: bytes, pad: bytes) -> bytes:
    return value + pad if len(value) % 2 else value


def _element(group: int, elem: int, vr: bytes, value: bytes) -> bytes:
    if vr in {b"UI", b"OB"}:
        value = _pad_even(value, b"\x00")
    else:
        value = _pad_even(value, b" ")
    head = struct.pack("<HH", group, elem) + vr
    if vr in _LONG_VRS:
        return head + b"\x00\x00" + struct.pack("<I", len(value)) + value
    if len(value) > 0xFFFF:
        raise ValueError(f"value too long for short VR {vr!r}")
    return head + struct.pack("<H", len(value)) + value


def _str_element(group: int, elem: int, vr: bytes, text: str) -> bytes:
    return _element(group, elem, vr, text.encode("ascii"))


def _us_element(group: int, elem: int, value: int) -> bytes:
    return _element(group, elem, b"US", struct.pack("<H", value))


def deterministic_uid(token: str) -> str:
    """UID in the 2.25 (UUID-derived) root, stable for a given token."""
    digest = hashlib.md5(token.encode("utf-8")).hexdigest()
    return "2.25." + str(int(digest, 16) % 10**38)


def write_dicom(volume, path: str | Path) -> Path:
    """Serialize a FrameVolume to the subset profile. Returns the path written."""
    path = Path(path)
    meta = volume.meta
    sop_uid = deterministic_uid(meta.video_id)

    file_meta = b"".join(
        [
            _element(0x0002, 0x0001, b"OB", b"\x00\x01"),
            _str_element(0x0002, 0x0002, b"UI", SOP_CLASS_US_MULTIFRAME),
            _str_element(0x0002, 0x0003, b"UI", sop_uid),
            _str_element(0x0002, 0x0010, b"UI", EXPLICIT_VR_LE),
            _str_element(0x0002, 0x0012, b"UI", IMPLEMENTATION_UID),
        ]
    )
    group_len = _element(0x0002, 0x0000, b"UL", struct.pack("<I", len(file_meta)))

    parts = [
        _str_element(0x0008, 0x0016, b"UI", SOP_CLASS_US_MULTIFRAME),
        _str_element(*TAG_SOP_INSTANCE_UID, b"UI", sop_uid),
        _str_element(*TAG_SERIES_DESC, b"LO", meta.site.value),
        _str_element(*TAG_PATIENT_ID, b"LO", meta.individual_id),
    ]
    fps = meta.fps
    if abs(fps - round(fps)) < 1e-9:
        parts.append(_str_element(*TAG_CINE_RATE, b"IS", str(int(round(fps)))))
    # FrameTime kept within the 16-byte DS limit; exact for integer rates.
    parts.append(_str_element(*TAG_FRAME_TIME, b"DS", f"{1000.0 / fps:.10g}"[:16]))
    parts.append(_str_element(*TAG_IMAGE_COMMENTS, b"LT", meta.video_id))

    photometric = "MONOCHROME2" if meta.color is ColorMode.GRAY8 else "RGB"
    parts.append(_us_element(*TAG_SAMPLES_PER_PIXEL, meta.color.channels))
    parts.append(_str_element(*TAG_PHOTOMETRIC, b"CS", photometric))
    if meta.color is ColorMode.RGB8:
        parts.append(_us_element(*TAG_PLANAR_CONFIG, 0))
    parts.append(_str_element(*TAG_NUMBER_OF_FRAMES, b"IS", str(meta.frame_count)))
    parts.append(_us_element(*TAG_ROWS, meta.height))
    parts.append(_us_element(*TAG_COLS, meta.width))
    parts.append(_us_element(0x0028, 0x0100, 8))   # BitsAllocated
    parts.append(_us_element(0x0028, 0x0101, 8))   # BitsStored
    parts.append(_us_element(0x0028, 0x0102, 7))   # HighBit
    parts.append(_us_element(0x0028, 0x0103, 0))   # PixelRepresentation
    parts.append(_element(*TAG_PIXEL_DATA, b"OB", volume.frames.tobytes()))

    with open(path, "wb") as fh:
        fh.write(b"\x00" * PREAMBLE_LEN)
        fh.write(DICOM_MAGIC)
        fh.write(group_len)
        fh.write(file_meta)
        fh.write(b"".join(parts))
    return path


# --- reading ---------------------------------------------------------------

@dataclass
class _RawElement:
    group: int
    elem: int
    vr: bytes
    length: int
    offset: int  # file offset of the value


class _Parser:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.path = path
        self.pos = PREAMBLE_LEN + len(DICOM_MAGIC)

    def _need(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptHeader(f"{self.path}: truncated element header")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def next_element(self) -> _RawElement:
        group, elem = struct.unpack("<HH", self._need(4))
        vr = self._need(2)
        if not (vr.isalpha() and vr.isupper()):
            raise CorruptHeader(
                f"{self.path}: invalid VR {vr!r} at tag "
                f"({group:04X},{elem:04X}); implicit-VR datasets are unsupported"
            )
        if vr in _LONG_VRS:
            self._need(2)  # reserved
            (length,) = struct.unpack("<I", self._need(4))
        else:
            (length,) = struct.unpack("<H", self._need(2))
        offset = self.pos
        if length != 0xFFFFFFFF:
            self.pos += length
        return _RawElement(group, elem, vr, length, offset)

    def value_bytes(self, el: _RawElement) -> bytes:
        end = el.offset + el.length
        if end > len(self.data):
            raise CorruptHeader(
                f"{self.path}: element ({el.group:04X},{el.elem:04X}) "
                f"declares {el.length} bytes beyond end of file"
            )
        return self.data[el.offset : end]


def _decode_str(raw: bytes) -> str:
    return raw.decode("ascii", errors="replace").strip(" \x00")


def is_dicom(path: Path) -> bool:
    try:
        with open(path, "rb") as fh:
            head = fh.read(PREAMBLE_LEN + len(DICOM_MAGIC))
    except OSError:
        return False
    return len(head) == PREAMBLE_LEN + 4 and head[PREAMBLE_LEN:] == DICOM_MAGIC


@dataclass
class _ParsedHeader:
    meta: VideoMeta
    transfer_syntax: str
    pixel_offset: int
    pixel_length: int
    channels: int


def _parse_header(path: Path) -> _ParsedHeader:
    data = path.read_bytes()
    if len(data) == 0:
        raise CorruptHeader(f"{path}: file is empty")
    if len(data) < PREAMBLE_LEN + 4 or data[PREAMBLE_LEN : PREAMBLE_LEN + 4] != DICOM_MAGIC:
        raise CorruptHeader(f"{path}: missing DICM magic")

    parser = _Parser(data, path)
    transfer_syntax = ""
    fields: dict[tuple[int, int], bytes] = {}
    pixel: _RawElement | None = None

    while parser.pos < len(data):
        el = parser.next_element()
        if el.length == 0xFFFFFFFF:
            if (el.group, el.elem) == TAG_PIXEL_DATA:
                pixel = el
                break
            raise UnsupportedFormat(
                f"{path}: undefined-length element ({el.group:04X},{el.elem:04X}) "
                "outside the supported profile"
            )
        if (el.group, el.elem) == TAG_PIXEL_DATA:
            pixel = el
            break
        if el.group == 0x0002 and (el.group, el.elem) == (0x0002, 0x0010):
            transfer_syntax = _decode_str(parser.value_bytes(el))
            continue
        if (el.group, el.elem) in _WANTED_TAGS:
            fields[(el.group, el.elem)] = parser.value_bytes(el)

    if transfer_syntax in (IMPLICIT_VR_LE, EXPLICIT_VR_BE):
        # Explicit-LE parsing of these would already have tripped the VR
        # check above in practice; keep the precise error for clarity.
        raise UnsupportedTransferSyntax(f"{path}: transfer syntax {transfer_syntax}")

    def _us(tag: tuple[int, int], name: str) -> int:
        raw = fields.get(tag)
        if raw is None or len(raw) < 2:
            raise CorruptHeader(f"{path}: missing {name}")
        return struct.unpack("<H", raw[:2])[0]

    rows = _us(TAG_ROWS, "Rows")
    cols = _us(TAG_COLS, "Columns")
    spp = _us(TAG_SAMPLES_PER_PIXEL, "SamplesPerPixel") if TAG_SAMPLES_PER_PIXEL in fields else 1
    bits = _us(TAG_BITS_ALLOCATED, "BitsAllocated") if TAG_BITS_ALLOCATED in fields else 8
    if bits != 8:
        raise UnsupportedFormat(f"{path}: BitsAllocated {bits} outside the 8-bit profile")

    photometric = _decode_str(fields.get(TAG_PHOTOMETRIC, b""))
    if spp == 1 and photometric in ("", "MONOCHROME2"):
        color = ColorMode.GRAY8
    elif spp == 3 and photometric == "RGB":
        if TAG_PLANAR_CONFIG in fields and _us(TAG_PLANAR_CONFIG, "PlanarConfiguration") != 0:
            raise UnsupportedFormat(f"{path}: planar (non-interleaved) RGB is unsupported")
        color = ColorMode.RGB8
    else:
        raise UnsupportedFormat(
            f"{path}: photometric {photometric!r} with {spp} samples/pixel is unsupported"
        )

    frame_count = 1
    if TAG_NUMBER_OF_FRAMES in fields:
        try:
            frame_count = int(_decode_str(fields[TAG_NUMBER_OF_FRAMES]))
        except ValueError as exc:
            raise CorruptHeader(f"{path}: bad NumberOfFrames") from exc

    fps = 0.0
    if TAG_CINE_RATE in fields:
        try:
            fps = float(int(_decode_str(fields[TAG_CINE_RATE])))
        except ValueError as exc:
            raise CorruptHeader(f"{path}: bad CineRate") from exc
    elif TAG_FRAME_TIME in fields:
        try:
            frame_time_ms = float(_decode_str(fields[TAG_FRAME_TIME]))
        except ValueError as exc:
            raise CorruptHeader(f"{path}: bad FrameTime") from exc
        if frame_time_ms > 0:
            fps = 1000.0 / frame_time_ms
    if fps <= 0:
        log.warning("%s: no frame rate metadata, defaulting to %s fps", path, DEFAULT_FPS)
        fps = DEFAULT_FPS

    video_id = _decode_str(fields.get(TAG_IMAGE_COMMENTS, b"")) or _decode_str(
        fields.get(TAG_SOP_INSTANCE_UID, b"")
    ) or path.stem
    individual_id = _decode_str(fields.get(TAG_PATIENT_ID, b"")) or video_id
    site = parse_site(_decode_str(fields.get(TAG_SERIES_DESC, b"")))

    if pixel is None:
        raise CorruptHeader(f"{path}: no PixelData element")

    meta = VideoMeta(
        video_id=video_id,
        individual_id=individual_id,
        site=site,
        fps=fps,
        frame_count=frame_count,
        width=cols,
        height=rows,
        color=color,
    )
    try:
        meta.validate()
    except ValueError as exc:
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    return _ParsedHeader(
        meta=meta,
        transfer_syntax=transfer_syntax or EXPLICIT_VR_LE,
        pixel_offset=pixel.offset,
        pixel_length=pixel.length,
        channels=color.channels,
    )


_WANTED_TAGS = {
    TAG_SOP_INSTANCE_UID,
    TAG_SERIES_DESC,
    TAG_PATIENT_ID,
    TAG_CINE_RATE,
    TAG_FRAME_TIME,
    TAG_IMAGE_COMMENTS,
    TAG_SAMPLES_PER_PIXEL,
    TAG_PHOTOMETRIC,
    TAG_PLANAR_CONFIG,
    TAG_NUMBER_OF_FRAMES,
    TAG_ROWS,
    TAG_COLS,
    TAG_BITS_ALLOCATED,
}


def probe_dicom(path: str | Path) -> VideoMeta:
    return _parse_header(Path(path)).meta


def load_dicom(path: str | Path):
    from .types import FrameVolume

    path = Path(path)
    header = _parse_header(path)
    if header.transfer_syntax != EXPLICIT_VR_LE:
        raise UnsupportedTransferSyntax(
            f"{path}: compressed transfer syntax {header.transfer_syntax}"
        )
    if header.pixel_length == 0xFFFFFFFF:
        raise CorruptHeader(f"{path}: undefined-length PixelData with native syntax")

    meta = header.meta
    expected = meta.frame_count * meta.height * meta.width * header.channels
    data = path.read_bytes()
    available = len(data) - header.pixel_offset
    if min(header.pixel_length, available) < expected:
        raise PixelDataTruncated(
            f"{path}: need {expected} pixel bytes, have {min(header.pixel_length, available)}"
        )
    raw = data[header.pixel_offset : header.pixel_offset + expected]
    frames = np.frombuffer(raw, dtype=np.uint8).reshape(
        meta.frame_count, meta.height, meta.width, header.channels
    )
    return FrameVolume(meta=meta, frames=frames.copy())

"""Decode/probe contracts for both container formats."""

import struct

import numpy as np
import pytest

from carovd.errors import (
    CorruptHeader,
    PixelDataTruncated,
    UnreadableFile,
    UnsupportedFormat,
    UnsupportedTransferSyntax,
)
from carovd.media import dicom, framedir
from carovd.media.ingest import load_video, probe_metadata
from carovd.media.types import ColorMode, Site, parse_site

from .conftest import make_volume


def gray_volume(rng, t=10, h=100, w=100, **kw):
    frames = rng.integers(0, 256, size=(t, h, w, 1), dtype=np.uint8)
    return make_volume(frames, **kw)


def rgb_volume(rng, t=8, h=96, w=128, **kw):
    frames = rng.integers(0, 256, size=(t, h, w, 3), dtype=np.uint8)
    return make_volume(frames, **kw)


class TestFrameDir:
    def test_manifest_echo(self, tmp_path, rng):
        vol = gray_volume(rng, t=120, fps=30.0, video_id="v120")
        framedir.write_framedir(vol, tmp_path / "v120")
        meta = probe_metadata(tmp_path / "v120")
        assert meta.fps == 30.0
        assert meta.frame_count == 120
        assert meta.video_id == "v120"

    def test_identity_roundtrip_identical_frames(self, tmp_path):
        frame = np.full((100, 100, 1), 77, dtype=np.uint8)
        vol = make_volume(np.repeat(frame[None], 10, axis=0))
        framedir.write_framedir(vol, tmp_path / "d")
        loaded = load_video(tmp_path / "d")
        assert loaded.equals(vol)

    def test_rgb_roundtrip_bit_exact(self, tmp_path, rng):
        vol = rgb_volume(rng, video_id="rgb1", site=Site.ICA_R, fps=25.0)
        framedir.write_framedir(vol, tmp_path / "rgb1")
        loaded = load_video(tmp_path / "rgb1")
        assert loaded.equals(vol)

    def test_missing_fps_defaults_to_30(self, tmp_path, rng, caplog):
        vol = gray_volume(rng)
        d = framedir.write_framedir(vol, tmp_path / "nf")
        manifest = (d / "manifest").read_text()
        (d / "manifest").write_text(
            "\n".join(l for l in manifest.splitlines() if not l.startswith("fps"))
        )
        meta = probe_metadata(d)
        assert meta.fps == 30.0

    def test_frame_count_mismatch(self, tmp_path, rng):
        vol = gray_volume(rng, t=5)
        d = framedir.write_framedir(vol, tmp_path / "mm")
        (d / "frame_000004.png").unlink()
        with pytest.raises(CorruptHeader):
            probe_metadata(d)

    def test_gap_in_numbering(self, tmp_path, rng):
        vol = gray_volume(rng, t=5)
        d = framedir.write_framedir(vol, tmp_path / "gap")
        manifest = (d / "manifest").read_text()
        (d / "manifest").write_text(
            "\n".join(l for l in manifest.splitlines() if not l.startswith("frame_count"))
        )
        (d / "frame_000002.png").rename(d / "frame_000009.png")
        with pytest.raises(CorruptHeader):
            probe_metadata(d)

    def test_dir_without_manifest(self, tmp_path):
        (tmp_path / "plain").mkdir()
        with pytest.raises(UnsupportedFormat):
            probe_metadata(tmp_path / "plain")


class TestDicom:
    def test_probe_cine_rate_and_frames(self, tmp_path, rng):
        vol = gray_volume(rng, t=75, fps=25.0, video_id="cine25")
        path = dicom.write_dicom(vol, tmp_path / "cine25.dcm")
        meta = probe_metadata(path)
        assert meta.fps == 25.0
        assert meta.frame_count == 75
        assert meta.video_id == "cine25"

    def test_gray_roundtrip_bit_exact(self, tmp_path, rng):
        vol = gray_volume(rng, video_id="g1", individual_id="p9", site=Site.CCA_R)
        path = dicom.write_dicom(vol, tmp_path / "g1.dcm")
        loaded = load_video(path)
        assert loaded.equals(vol)

    def test_rgb_roundtrip_bit_exact(self, tmp_path, rng):
        vol = rgb_volume(rng, video_id="c1", site=Site.ECA_L, fps=40.0)
        path = dicom.write_dicom(vol, tmp_path / "c1.dcm")
        loaded = load_video(path)
        assert loaded.equals(vol)

    def test_decode_deterministic(self, tmp_path, rng):
        vol = rgb_volume(rng)
        path = dicom.write_dicom(vol, tmp_path / "det.dcm")
        a = load_video(path)
        b = load_video(path)
        assert a.equals(b)

    def test_probe_matches_load_frame_count(self, tmp_path, rng):
        vol = gray_volume(rng, t=33)
        path = dicom.write_dicom(vol, tmp_path / "fc.dcm")
        assert probe_metadata(path).frame_count == load_video(path).frames.shape[0]

    def test_zero_byte_file(self, tmp_path):
        path = tmp_path / "zero.dcm"
        path.write_bytes(b"")
        with pytest.raises(CorruptHeader):
            probe_metadata(path)

    def test_missing_path(self, tmp_path):
        with pytest.raises(UnreadableFile):
            probe_metadata(tmp_path / "nope.dcm")

    def test_random_binary_is_unsupported(self, tmp_path):
        path = tmp_path / "blob.bin"
        path.write_bytes(b"\x13\x37" * 400)
        with pytest.raises(UnsupportedFormat):
            probe_metadata(path)

    def test_truncated_pixel_data(self, tmp_path, rng):
        vol = gray_volume(rng, t=4)
        path = dicom.write_dicom(vol, tmp_path / "trunc.dcm")
        raw = path.read_bytes()
        path.write_bytes(raw[:-500])
        with pytest.raises(PixelDataTruncated):
            load_video(path)

    def test_jpeg_transfer_syntax_rejected(self, tmp_path, rng):
        vol = gray_volume(rng, t=4)
        path = dicom.write_dicom(vol, tmp_path / "jpeg.dcm")
        raw = bytearray(path.read_bytes())
        # swap the transfer syntax UID for JPEG baseline, patching lengths
        ts_header = struct.pack("<HH", 0x0002, 0x0010) + b"UI"
        idx = raw.find(ts_header)
        assert idx > 0
        old_len = struct.unpack("<H", raw[idx + 6 : idx + 8])[0]
        jpeg = b"1.2.840.10008.1.2.4.50"
        raw[idx + 6 : idx + 8] = struct.pack("<H", len(jpeg))
        raw[idx + 8 : idx + 8 + old_len] = jpeg
        gl_header = struct.pack("<HH", 0x0002, 0x0000) + b"UL"
        gidx = raw.find(gl_header)
        group_len = struct.unpack("<I", raw[gidx + 8 : gidx + 12])[0]
        raw[gidx + 8 : gidx + 12] = struct.pack("<I", group_len + len(jpeg) - old_len)
        path.write_bytes(bytes(raw))
        with pytest.raises(UnsupportedTransferSyntax):
            load_video(path)
        # metadata is still probeable for compressed files
        assert probe_metadata(path).frame_count == 4

    def test_fractional_fps_via_frame_time(self, tmp_path, rng):
        vol = gray_volume(rng, fps=29.0)
        path = dicom.write_dicom(vol, tmp_path / "ft.dcm")
        raw = bytearray(path.read_bytes())
        # drop CineRate so the reader falls back to FrameTime
        tag = struct.pack("<HH", 0x0018, 0x0040)
        idx = raw.find(tag)
        assert idx > 0
        length = struct.unpack("<H", raw[idx + 6 : idx + 8])[0]
        del raw[idx : idx + 8 + length]
        path.write_bytes(bytes(raw))
        meta = probe_metadata(path)
        assert meta.fps == pytest.approx(29.0, rel=1e-6)

    def test_tiny_frames_rejected(self, tmp_path, rng):
        frames = rng.integers(0, 256, size=(4, 32, 32, 1), dtype=np.uint8)
        vol = make_volume(frames)
        path = dicom.write_dicom(vol, tmp_path / "tiny.dcm")
        with pytest.raises(UnsupportedFormat):
            probe_metadata(path)


class TestSiteParse:
    @pytest.mark.parametrize(
        "token,expected",
        [
            ("CCA_L", Site.CCA_L),
            ("cca-r", Site.CCA_R),
            (" ica_l ", Site.ICA_L),
            ("garbage", Site.UNKNOWN),
            ("", Site.UNKNOWN),
            (None, Site.UNKNOWN),
        ],
    )
    def test_total_parse(self, token, expected):
        assert parse_site(token) is expected


class TestCrossFormat:
    def test_same_volume_both_formats(self, tmp_path, rng):
        vol = gray_volume(rng, video_id="x", fps=30.0)
        d = framedir.write_framedir(vol, tmp_path / "x")
        f = dicom.write_dicom(vol, tmp_path / "x.dcm")
        assert load_video(d).equals(load_video(f))

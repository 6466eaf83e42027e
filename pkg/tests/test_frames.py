"""Tests for frames and the PGM codec"""

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from src.tbd_tracker.exceptions import FrameIOError, UsageError
from src.tbd_tracker.frames import (
    Frame,
    load_background,
    load_frame,
    read_pgm,
    save_frame,
    write_pgm,
)

BYTE_MAX = 255
WORD_MAX = 65535


class TestFrame:
    def test_non_finite_pixels_rejected(self) -> None:
        with pytest.raises(UsageError, match="non-finite"):
            Frame(pixels=np.array([[0.0, np.nan]]))

    def test_must_be_two_dimensional(self) -> None:
        with pytest.raises(UsageError):
            Frame(pixels=np.zeros(4))

    def test_axes(self) -> None:
        frame = Frame(pixels=np.zeros((5, 3)), step=7)
        assert (frame.n, frame.m, frame.step) == (5, 3, 7)


class TestPgmCodec:
    """Test reading and writing PGM files"""

    def test_two_by_two_background_scaled(self, tmp_path: Path) -> None:
        path = tmp_path / "bg.pgm"
        path.write_bytes(b"P2\n2 2\n255\n0 255\n0 255\n")
        frame = load_background(path, 0.0, 1.0)
        # rows are y, so the transposed array has x along axis 0
        np.testing.assert_array_equal(frame.pixels, [[0.0, 0.0], [1.0, 1.0]])

    def test_raw_and_plain_agree(self, tmp_path: Path) -> None:
        data = np.arange(12).reshape(3, 4) * 20
        write_pgm(tmp_path / "raw.pgm", data, BYTE_MAX)
        write_pgm(tmp_path / "plain.pgm", data, BYTE_MAX, plain=True)
        np.testing.assert_array_equal(read_pgm(tmp_path / "raw.pgm").data, data)
        np.testing.assert_array_equal(read_pgm(tmp_path / "plain.pgm").data, data)

    def test_sixteen_bit_raw(self, tmp_path: Path) -> None:
        data = np.array([[0, 300], [WORD_MAX, 1]])
        write_pgm(tmp_path / "wide.pgm", data, WORD_MAX)
        image = read_pgm(tmp_path / "wide.pgm")
        assert image.maxval == WORD_MAX
        np.testing.assert_array_equal(image.data, data)

    def test_comments_in_header(self, tmp_path: Path) -> None:
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P2\n# made by hand\n2 1\n# another\n9\n3 9\n")
        image = read_pgm(path)
        assert image.comments == ["made by hand", "another"]
        np.testing.assert_array_equal(image.data, [[3, 9]])

    def test_matches_independent_reader(self, tmp_path: Path) -> None:
        rng = np.random.default_rng(3)
        data = rng.integers(0, BYTE_MAX + 1, size=(17, 23))
        path = tmp_path / "random.pgm"
        write_pgm(path, data, BYTE_MAX)
        with Image.open(path) as image:
            reference = np.asarray(image, dtype=np.int64)
        np.testing.assert_array_equal(reference, data)
        frame = load_background(path, 0.0, float(BYTE_MAX))
        assert abs(frame.pixels.mean() - reference.mean()) <= 1.0

    def test_reads_file_written_by_pillow(self, tmp_path: Path) -> None:
        data = np.arange(35, dtype=np.uint8).reshape(5, 7) * 7
        path = tmp_path / "pillow.pgm"
        Image.fromarray(data).save(path, format="PPM")
        image = read_pgm(path)
        assert (image.maxval, image.comments) == (BYTE_MAX, [])
        np.testing.assert_array_equal(image.data, data)

    def test_commented_eight_bit_dump_keeps_scale(self, tmp_path: Path) -> None:
        pixels = np.linspace(0.0, 2.0, 12).reshape(4, 3)
        save_frame(tmp_path / "dump.pgm", Frame(pixels), maxval=BYTE_MAX)
        image = read_pgm(tmp_path / "dump.pgm")
        assert image.scale == (0.0, 2.0)
        np.testing.assert_allclose(load_frame(tmp_path / "dump.pgm").pixels, pixels, atol=2.0 / BYTE_MAX)

    def test_load_save_round_trip_at_eight_bits(self, tmp_path: Path) -> None:
        data = np.arange(BYTE_MAX + 1).reshape(16, 16)
        source = tmp_path / "src.pgm"
        write_pgm(source, data, BYTE_MAX)
        frame = load_background(source, 0.0, 1.0)
        save_frame(tmp_path / "copy.pgm", frame, 0.0, 1.0, maxval=BYTE_MAX)
        np.testing.assert_array_equal(read_pgm(tmp_path / "copy.pgm").data, data)

    def test_frame_dump_records_scale(self, tmp_path: Path) -> None:
        pixels = np.linspace(-3.0, 12.0, 30).reshape(6, 5)
        save_frame(tmp_path / "dump.pgm", Frame(pixels, step=4))
        restored = load_frame(tmp_path / "dump.pgm")
        step = (12.0 - -3.0) / WORD_MAX
        np.testing.assert_allclose(restored.pixels, pixels, atol=step)

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(FrameIOError, match="not found") as info:
            read_pgm(tmp_path / "nope.pgm")
        assert info.value.path == tmp_path / "nope.pgm"

    @pytest.mark.parametrize(
        "content",
        [b"P6\n1 1\n255\n\x00\x00\x00", b"P5\n4 4\n255\n\x00", b"P2\n2 2\n", b"P2\n2 1\n9\n3 12\n"],
    )
    def test_corrupt_files(self, tmp_path: Path, content: bytes) -> None:
        path = tmp_path / "bad.pgm"
        path.write_bytes(content)
        with pytest.raises(FrameIOError):
            read_pgm(path)

    def test_background_shape_checked(self, tmp_path: Path) -> None:
        write_pgm(tmp_path / "bg.pgm", np.zeros((3, 4), dtype=int), BYTE_MAX)
        with pytest.raises(FrameIOError, match="expected"):
            load_background(tmp_path / "bg.pgm", 0.0, 1.0, shape=(3, 4))

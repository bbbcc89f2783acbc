import os

import pytest
from hypothesis import given, strategies as st

from squashread.errors import (
    EmptyFile, ImageNotFound, ImageOpenError, NotFound, OutOfBounds, PermissionDenied,
)
from squashread.storage import FileSource, MemorySource, open_image


def test_read_at_returns_requested_slice(tmp_path):
    p = tmp_path / "img"
    p.write_bytes(bytes(range(256)) * 4)
    with open_image(str(p)) as src:
        assert src.total_size == 1024
        assert src.read_at(0, 4) == b"\x00\x01\x02\x03"
        assert src.read_at(1020, 4) == b"\xfc\xfd\xfe\xff"
        assert src.read_at(1024, 0) == b""


def test_read_past_end_is_out_of_bounds(tmp_path):
    p = tmp_path / "img"
    p.write_bytes(b"x" * 100)
    with open_image(str(p)) as src:
        with pytest.raises(OutOfBounds):
            src.read_at(96, 8)
        with pytest.raises(OutOfBounds):
            src.read_at(-1, 1)


def test_missing_file(tmp_path):
    with pytest.raises(ImageNotFound) as exc:
        open_image(str(tmp_path / "nope.sqfs"))
    assert isinstance(exc.value, NotFound)
    assert isinstance(exc.value, FileNotFoundError)


def test_empty_file(tmp_path):
    p = tmp_path / "empty"
    p.write_bytes(b"")
    with pytest.raises(EmptyFile):
        open_image(str(p))


def test_directory_is_rejected(tmp_path):
    with pytest.raises(ImageOpenError):
        open_image(str(tmp_path))


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores file modes")
def test_permission_denied(tmp_path):
    p = tmp_path / "locked"
    p.write_bytes(b"data")
    p.chmod(0)
    with pytest.raises(PermissionDenied):
        open_image(str(p))


def test_file_source_closes(tmp_path):
    p = tmp_path / "img"
    p.write_bytes(b"abc")
    src = FileSource(str(p))
    src.close()
    src.close()  # idempotent


@given(st.binary(min_size=1, max_size=512), st.data())
def test_memory_source_matches_slicing(data, draw):
    src = MemorySource(data)
    off = draw.draw(st.integers(0, len(data)))
    length = draw.draw(st.integers(0, len(data) - off))
    assert src.read_at(off, length) == data[off:off + length]


@given(st.binary(min_size=1, max_size=256), st.integers(0, 300), st.integers(1, 300))
def test_memory_source_bounds(data, off, length):
    src = MemorySource(data)
    if off + length > len(data):
        with pytest.raises(OutOfBounds):
            src.read_at(off, length)
    else:
        assert len(src.read_at(off, length)) == length

import os
import struct
import zlib

import pytest

from squashread import vfs
from squashread.conformance import corpus, harness

BS = 131072


def build(tmp_path, populate, flags=(), name="image.sqfs"):
    """Populate a fresh source dir, build it, return (image path, tree)."""
    src = tmp_path / (name + ".src")
    src.mkdir()
    tree = populate(str(src))
    image = str(tmp_path / name)
    harness.build_image(str(src), image, flags)
    return image, tree


@pytest.fixture(scope="session")
def sample_image(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("sample")
    return build(tmp, corpus.sample_tree, ("-mkfs-time", "1596555974"))


@pytest.fixture(scope="session")
def three_file_image(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("three")
    return build(tmp, corpus.three_file_tree, ("-always-use-fragments",))


@pytest.fixture
def ctx(sample_image):
    c = vfs.mount(sample_image[0])
    yield c
    if not c.closed:
        c.close()


def meta_block(payload, compress=True):
    """Hand-rolled metadata block: 2-byte header then payload, raw if compression does not help."""
    if compress:
        packed = zlib.compress(payload)
        if len(packed) < len(payload):
            return struct.pack("<H", len(packed)) + packed
    return struct.pack("<H", len(payload) | 0x8000) + payload


def superblock_bytes(**over):
    fields = dict(
        magic=0x73717368, inode_count=1, mkfs_time=0, block_size=BS, fragment_count=0,
        compression=1, block_log=17, flags=0, id_count=1, major=4, minor=0, root=0,
        bytes_used=200, id_start=180, xattr=2**64 - 1, inode_start=96, dir_start=150,
        frag_start=170, export=2**64 - 1,
    )
    fields.update(over)
    return struct.pack("<IIIIIHHHHHHQQQQQQQQ", *fields.values())


def image_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def sb_field(data, name):
    """Read one superblock field straight from the image bytes."""
    offsets = {"inode_count": (4, "<I"), "bytes_used": (40, "<Q"), "id_start": (48, "<Q"),
               "inode_start": (64, "<Q"), "dir_start": (72, "<Q"), "frag_start": (80, "<Q")}
    off, fmt = offsets[name]
    return struct.unpack_from(fmt, data, off)[0]


def host_read(tree, path):
    with open(tree.host_path(path), "rb") as f:
        return f.read()


def has_backhand():
    return os.path.exists(BACKHAND)


BACKHAND = os.environ.get(
    "SQUASHREAD_BACKHAND",
    os.path.join(os.path.dirname(__file__), "..", "tools", "backhand-oracle", "target",
                 "release", "backhand-oracle"),
)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])

import random
import struct

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from conftest import build, image_bytes
from squashread import dump, vfs
from squashread.conformance import corpus
from squashread.errors import SquashfsError
from squashread.storage import MemorySource


@pytest.fixture(scope="module")
def small_image(tmp_path_factory):
    spec = corpus.CorpusSpec(
        seed=11, depth=2, fanout=2, block_size=4096, max_blocks=3,
        sizes=corpus.SizePlan(data_only=2, fragment_only=6, mixed=3, sparse=1, zero_length=1),
        symlinks=corpus.SymlinkPlan(valid=2, dangling=1, loop=1),
    )
    image, _ = build(tmp_path_factory.mktemp("robust"), lambda root: corpus.generate_tree(spec, root),
                     ("-b", "4096"))
    return image_bytes(image)


def walk_everything(data):
    """Probe and touch every structure; returns normally or raises."""
    with vfs.probe(MemorySource(data)) as ctx:
        dump.dump_superblock(ctx)
        dump.dump_inode_table(ctx)
        dump.dump_directory_table(ctx)
        pending = ["/"]
        while pending:
            path = pending.pop()
            for d in ctx.opendir(path):
                child = path.rstrip("/") + "/" + d.name
                if d.is_dir:
                    pending.append(child)
                elif d.is_symlink:
                    try:
                        ctx.resolve(child)
                    except SquashfsError:
                        pass
                else:
                    inode = ctx.inode_at(d.ref)
                    if inode.is_file:
                        ctx.read_inode_data(inode)


def assert_typed(data):
    try:
        walk_everything(data)
    except SquashfsError:
        pass


def test_clean_image_walks(small_image):
    walk_everything(small_image)


def test_truncation_at_random_offsets(small_image):
    bytes_used = struct.unpack_from("<Q", small_image, 40)[0]
    rng = random.Random(2020)
    for cut in rng.sample(range(bytes_used), 20):
        with pytest.raises(SquashfsError):
            walk_everything(small_image[:cut])


def test_truncation_with_patched_size(small_image):
    """Claim the shorter length is complete so probing proceeds past the size check."""
    bytes_used = struct.unpack_from("<Q", small_image, 40)[0]
    rng = random.Random(7)
    for cut in rng.sample(range(97, bytes_used), 20):
        data = bytearray(small_image[:cut])
        struct.pack_into("<Q", data, 40, cut)
        assert_typed(bytes(data))


@settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(st.tuples(st.integers(0, 1 << 30), st.integers(0, 255)), min_size=1, max_size=8))
def test_byte_corruption(small_image, edits):
    data = bytearray(small_image)
    for pos, value in edits:
        data[pos % len(data)] = value
    assert_typed(bytes(data))


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(0, 95), st.integers(0, 255))
def test_superblock_corruption(small_image, pos, value):
    data = bytearray(small_image)
    data[pos] = value
    assert_typed(bytes(data))

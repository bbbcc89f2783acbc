import struct

import pytest
from hypothesis import given, strategies as st

from conftest import superblock_bytes
from squashread import ondisk
from squashread.errors import (
    BadBlockList, BadMagic, CorruptDirectory, CorruptSuperblock, InvalidName, InvalidRef,
    TruncatedEntry, TruncatedHeader, TruncatedInode, UnknownInodeType, UnsupportedVersion,
)
from squashread.ondisk import (
    ABSENT, NO_FRAGMENT, MetaRef, decode_meta_ref, parse_dir_entry, parse_dir_header,
    parse_fragment_entry, parse_inode, parse_superblock, parse_u32, parse_u64,
)

BS = 131072

# superblock values as printed for the published example image
REFERENCE_SB = dict(
    inode_count=4, block_size=131072, fragment_count=1, block_log=17, compression=1,
    flags=0xC0, root=0x60, bytes_used=312, id_start=0x130, inode_start=0x6C, dir_start=0xBC,
    frag_start=0x105, export=0x122,
)


def test_superblock_published_values():
    sb = parse_superblock(superblock_bytes(**REFERENCE_SB))
    assert sb.inode_count == 4
    assert sb.fragment_count == 1
    assert sb.block_log == 17
    assert (sb.version_major, sb.version_minor) == (4, 0)
    assert sb.root_inode_ref.raw == 0x60
    assert sb.root_inode_ref == MetaRef(0, 0x60)
    assert sb.bytes_used == 312
    assert sb.xattr_id_table_start == ABSENT
    assert sb.flag_names == ["Duplicates", "Exportable"]
    assert sb.has_export_table and not sb.has_xattrs


@pytest.mark.parametrize("over, exc", [
    (dict(magic=0x12345678), BadMagic),
    (dict(major=3), UnsupportedVersion),
    (dict(minor=1), UnsupportedVersion),
    (dict(block_log=16), CorruptSuperblock),
    (dict(block_size=2048, block_log=11), CorruptSuperblock),
    (dict(block_size=1 << 21, block_log=21), CorruptSuperblock),
    (dict(inode_start=200, dir_start=150), CorruptSuperblock),
    (dict(inode_count=0), CorruptSuperblock),
    (dict(root=0x2000), CorruptSuperblock),
])
def test_superblock_rejections(over, exc):
    with pytest.raises(exc):
        parse_superblock(superblock_bytes(**over))


def test_superblock_short_buffer():
    with pytest.raises(CorruptSuperblock):
        parse_superblock(superblock_bytes()[:95])


def test_meta_ref_split():
    ref = decode_meta_ref(0x0000_1234_0056)
    assert (ref.block_start, ref.intra_offset) == (0x1234, 0x56)
    assert ref.raw == 0x1234_0056
    with pytest.raises(InvalidRef):
        decode_meta_ref(0x2000)


@given(st.integers(0, (1 << 48) - 1), st.integers(0, 8191))
def test_meta_ref_round_trip(block, offset):
    assert decode_meta_ref((block << 16) | offset) == MetaRef(block, offset)


# inode encoders, written from the record layouts

def header(itype, number, mode=0o644, uid=0, gid=0, mtime=1000):
    return struct.pack("<HHHHII", itype, mode, uid, gid, mtime, number)


def basic_file(number, size, frag=NO_FRAGMENT, foff=0, start=96, sizes=()):
    return (header(2, number) + struct.pack("<IIII", start, frag, foff, size)
            + struct.pack(f"<{len(sizes)}I", *sizes))


def ext_file(number, size, sparse, frag=NO_FRAGMENT, sizes=()):
    return (header(9, number) + struct.pack("<QQQIIII", 96, size, sparse, 2, frag, 0, 7)
            + struct.pack(f"<{len(sizes)}I", *sizes))


def test_basic_directory():
    raw = header(1, 1, 0o755) + struct.pack("<IIHHI", 0, 2, 3, 0, 4)
    inode, used = parse_inode(raw, 0, BS)
    assert used == 32
    assert inode.is_dir and inode.type_name == "Basic Directory"
    assert (inode.file_size, inode.parent_inode, inode.nlink) == (3, 4, 2)
    assert inode.listing_size == 0


def test_extended_directory_with_index():
    body = struct.pack("<IIIIHHI", 2, 9000, 0, 5, 1, 12, 0xFFFFFFFF)
    body += struct.pack("<III", 8000, 8194, 2) + b"abc"
    inode, used = parse_inode(header(8, 3, 0o755) + body, 0, BS)
    assert used == 16 + 24 + 12 + 3
    assert inode.index_count == 1
    assert inode.index[0].name == b"abc"
    assert inode.listing_size == 9000 - 3
    assert inode.listing_ref == MetaRef(0, 12)


@pytest.mark.parametrize("size, frag, nblocks", [
    (2 * BS, NO_FRAGMENT, 2),
    (BS // 2, 0, 0),
    (5 * BS // 2, 0, 2),
    (5 * BS // 2, NO_FRAGMENT, 3),
    (0, NO_FRAGMENT, 0),
])
def test_basic_file_block_count(size, frag, nblocks):
    sizes = list(range(100, 100 + nblocks))
    raw = basic_file(2, size, frag, sizes=sizes)
    inode, used = parse_inode(raw, 0, BS)
    assert used == 32 + 4 * nblocks
    assert inode.block_sizes == sizes
    assert inode.has_fragment == (frag != NO_FRAGMENT)


def test_extended_file():
    raw = ext_file(5, 3 * BS, BS, sizes=[0, 10, 20])
    inode, used = parse_inode(raw, 0, BS)
    assert used == 16 + 40 + 12
    assert inode.sparse == BS and inode.nlink == 2 and inode.xattr_idx == 7
    assert inode.type_name == "Extended File"


def test_symlinks():
    raw = header(3, 3, 0o777) + struct.pack("<II", 1, 8) + b"file.txt"
    inode, used = parse_inode(raw, 0, BS)
    assert inode.is_symlink and inode.target == b"file.txt" and used == 32
    raw = header(10, 3, 0o777) + struct.pack("<II", 1, 3) + b"abc" + struct.pack("<I", 5)
    inode, used = parse_inode(raw, 0, BS)
    assert inode.is_symlink and inode.xattr_idx == 5 and used == 31


@pytest.mark.parametrize("itype, body, used", [
    (4, struct.pack("<II", 1, 0x0801), 24),
    (5, struct.pack("<II", 1, 0x0501), 24),
    (6, struct.pack("<I", 1), 20),
    (7, struct.pack("<I", 1), 20),
    (11, struct.pack("<III", 1, 0x0801, 0), 28),
    (13, struct.pack("<II", 1, 0), 24),
])
def test_special_inodes(itype, body, used):
    inode, n = parse_inode(header(itype, 9) + body, 0, BS)
    assert n == used
    assert not (inode.is_dir or inode.is_file or inode.is_symlink)


def test_inode_errors():
    with pytest.raises(UnknownInodeType):
        parse_inode(header(15, 1) + bytes(32), 0, BS)
    with pytest.raises(TruncatedInode):
        parse_inode(header(1, 1)[:10], 0, BS)
    with pytest.raises(TruncatedInode):
        parse_inode(header(3, 1) + struct.pack("<II", 1, 50) + b"short", 0, BS)
    with pytest.raises(BadBlockList):
        parse_inode(basic_file(2, 3 * BS, sizes=[1]), 0, BS)


def test_dir_header_and_entry():
    data = struct.pack("<III", 2, 0, 10) + struct.pack("<HhHH", 0x40, -1, 2, 4) + b"hello"
    hdr, used = parse_dir_header(data, 0)
    assert (hdr.count, hdr.start, hdr.inode_number, used) == (3, 0, 10, 12)
    entry, used = parse_dir_entry(data, 12)
    assert (entry.offset, entry.inode_delta, entry.entry_type, entry.name) == (0x40, -1, 2, b"hello")
    assert used == 13


def test_dir_record_errors():
    with pytest.raises(CorruptDirectory):
        parse_dir_header(struct.pack("<III", 256, 0, 1), 0)
    with pytest.raises(TruncatedHeader):
        parse_dir_header(b"\0" * 11, 0)
    with pytest.raises(TruncatedEntry):
        parse_dir_entry(struct.pack("<HhHH", 0, 0, 2, 9) + b"abc", 0)
    with pytest.raises(InvalidName):
        parse_dir_entry(struct.pack("<HhHH", 0, 0, 2, 2) + b"a/b", 0)
    with pytest.raises(InvalidName):
        parse_dir_entry(struct.pack("<HhHH", 0, 0, 2, 2) + b"a\0b", 0)


def test_fragment_entry():
    entry, used = parse_fragment_entry(struct.pack("<QII", 0x60, (1 << 24) | 500, 0), 0)
    assert used == 16
    assert entry.start == 0x60 and entry.on_disk_size == 500 and not entry.compressed


# staging at odd offsets must not change any result

RECORDS = [
    (parse_superblock, superblock_bytes(**REFERENCE_SB), ()),
    (parse_inode, basic_file(2, 5 * BS // 2, 0, sizes=[7, 8]), (BS,)),
    (parse_inode, ext_file(5, 3 * BS, BS, sizes=[0, 1, 2]), (BS,)),
    (parse_inode, header(3, 3) + struct.pack("<II", 1, 8) + b"file.txt", (BS,)),
    (parse_inode, header(1, 1) + struct.pack("<IIHHI", 0, 2, 3, 0, 4), (BS,)),
    (parse_dir_header, struct.pack("<III", 2, 0x1234, 77), ()),
    (parse_dir_entry, struct.pack("<HhHH", 0x40, -3, 1, 2) + b"abc", ()),
    (parse_fragment_entry, struct.pack("<QII", 0x1_0000_0060, 1234, 0), ()),
    (parse_u32, struct.pack("<I", 0xDEADBEEF), ()),
    (parse_u64, struct.pack("<Q", 0x0102030405060708), ()),
]


def _call(fn, data, offset, extra):
    if fn is parse_superblock:
        return fn(data, offset)
    return fn(data, offset, *extra)


@pytest.mark.parametrize("fn, record, extra", RECORDS)
@given(shift=st.integers(1, 63).filter(lambda n: n % 2), pad=st.binary(max_size=16),
       kind=st.sampled_from([bytes, bytearray, memoryview]))
def test_unaligned_staging(fn, record, extra, shift, pad, kind):
    base = _call(fn, record, 0, extra)
    scratch = bytes(shift) + record + pad
    assert _call(fn, kind(scratch), shift, extra) == base


@given(st.integers(0, (1 << 32) - 1), st.integers(0, (1 << 32) - 1), st.integers(0, 255),
       st.integers(1, 63))
def test_file_inode_round_trip(size, start, nblocks_seed, shift):
    bs = 4096
    frag = 0 if nblocks_seed % 2 else NO_FRAGMENT
    size = size % (64 * bs)
    n = ondisk.block_count(size, bs, frag)
    sizes = [(start + i) & 0x1FFFFFF for i in range(n)]
    raw = basic_file(11, size, frag, 0, start, sizes)
    inode, used = parse_inode(bytes(shift) + raw, shift, bs)
    assert used == len(raw)
    assert (inode.blocks_start, inode.file_size, inode.block_sizes) == (start, size, sizes)

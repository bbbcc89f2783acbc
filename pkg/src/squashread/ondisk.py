"""Little-endian decoding of SquashFS 4.0 on-disk structures.

Every decoder takes a byte view plus an offset and uses ``struct.unpack_from``
with explicit ``<`` formats, so results never depend on where the bytes sit
in memory.
"""

import struct
from dataclasses import dataclass, field

from .errors import (
    BadBlockList, BadMagic, CorruptDirectory, CorruptSuperblock, InvalidName, InvalidRef,
    TruncatedEntry, TruncatedHeader, TruncatedInode, UnknownInodeType,
    UnsupportedVersion,
)

MAGIC = 0x73717368
SUPERBLOCK_SIZE = 96
METADATA_SIZE = 8192
ABSENT = 0xFFFFFFFFFFFFFFFF
NO_FRAGMENT = 0xFFFFFFFF
NO_XATTR = 0xFFFFFFFF
MIN_BLOCK_SIZE = 4096
MAX_BLOCK_SIZE = 1 << 20

BLOCK_UNCOMPRESSED = 1 << 24
BLOCK_SIZE_MASK = BLOCK_UNCOMPRESSED - 1

# inode / directory entry types
DIR, FILE, SYMLINK, BLKDEV, CHRDEV, FIFO, SOCKET = range(1, 8)
LDIR, LFILE, LSYMLINK, LBLKDEV, LCHRDEV, LFIFO, LSOCKET = range(8, 15)

TYPE_NAMES = {
    DIR: "Basic Directory",
    FILE: "Basic File",
    SYMLINK: "Basic Symlink",
    BLKDEV: "Basic Block Device",
    CHRDEV: "Basic Character Device",
    FIFO: "Basic FIFO",
    SOCKET: "Basic Socket",
    LDIR: "Extended Directory",
    LFILE: "Extended File",
    LSYMLINK: "Extended Symlink",
    LBLKDEV: "Extended Block Device",
    LCHRDEV: "Extended Character Device",
    LFIFO: "Extended FIFO",
    LSOCKET: "Extended Socket",
}

# superblock flag bits
FLAG_NAMES = [
    (0x0001, "Uncompressed inodes"),
    (0x0002, "Uncompressed data"),
    (0x0004, "Check"),
    (0x0008, "Uncompressed fragments"),
    (0x0010, "No fragments"),
    (0x0020, "Always fragments"),
    (0x0040, "Duplicates"),
    (0x0080, "Exportable"),
    (0x0100, "Uncompressed xattrs"),
    (0x0200, "No xattrs"),
    (0x0400, "Compressor options"),
    (0x0800, "Uncompressed ids"),
]

_SUPERBLOCK = struct.Struct("<IIIIIHHHHHHQQQQQQQQ")
_INODE_HEADER = struct.Struct("<HHHHII")
_BASIC_DIR = struct.Struct("<IIHHI")
_EXT_DIR = struct.Struct("<IIIIHHI")
_DIR_INDEX = struct.Struct("<III")
_BASIC_FILE = struct.Struct("<IIII")
_EXT_FILE = struct.Struct("<QQQIIII")
_SYMLINK = struct.Struct("<II")
_DEV = struct.Struct("<II")
_LDEV = struct.Struct("<III")
_IPC = struct.Struct("<I")
_LIPC = struct.Struct("<II")
_DIR_HEADER = struct.Struct("<III")
_DIR_ENTRY = struct.Struct("<HhHH")
_FRAGMENT = struct.Struct("<QII")

assert _SUPERBLOCK.size == SUPERBLOCK_SIZE

DIR_HEADER_SIZE = _DIR_HEADER.size
DIR_ENTRY_SIZE = _DIR_ENTRY.size
FRAGMENT_ENTRY_SIZE = _FRAGMENT.size
INODE_HEADER_SIZE = _INODE_HEADER.size


@dataclass(frozen=True)
class MetaRef:
    block_start: int
    intra_offset: int

    @property
    def raw(self):
        return (self.block_start << 16) | self.intra_offset

    def __str__(self):
        return hex(self.raw)


def decode_meta_ref(raw):
    if raw < 0 or raw >= 1 << 64:
        raise InvalidRef(f"metadata reference {raw:#x} is not a u64")
    ref = MetaRef(raw >> 16, raw & 0xFFFF)
    if ref.intra_offset >= METADATA_SIZE:
        raise InvalidRef(f"metadata reference {raw:#x}: offset {ref.intra_offset:#x} >= 8192")
    return ref


@dataclass(frozen=True)
class Superblock:
    magic: int
    inode_count: int
    mkfs_time: int
    block_size: int
    fragment_count: int
    compression_id: int
    block_log: int
    flags: int
    id_count: int
    version_major: int
    version_minor: int
    root_inode_ref: MetaRef
    bytes_used: int
    id_table_start: int
    xattr_id_table_start: int
    inode_table_start: int
    directory_table_start: int
    fragment_table_start: int
    export_table_start: int

    @property
    def flag_names(self):
        return [name for bit, name in FLAG_NAMES if self.flags & bit]

    @property
    def has_export_table(self):
        return self.export_table_start != ABSENT

    @property
    def has_xattrs(self):
        return self.xattr_id_table_start != ABSENT


def parse_superblock(data, offset=0):
    if len(data) - offset < SUPERBLOCK_SIZE:
        raise CorruptSuperblock(
            f"superblock needs {SUPERBLOCK_SIZE} bytes, got {max(len(data) - offset, 0)}")
    fields = _SUPERBLOCK.unpack_from(data, offset)
    (magic, inode_count, mkfs_time, block_size, fragment_count, compression_id,
     block_log, flags, id_count, major, minor, root_ref, bytes_used, id_start,
     xattr_start, inode_start, dir_start, frag_start, export_start) = fields
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic:#010x}, expected {MAGIC:#010x} ('hsqs')")
    if major != 4 or minor != 0:
        raise UnsupportedVersion(f"SquashFS {major}.{minor} is not supported, need 4.0")
    if block_log >= 32 or block_size != 1 << block_log:
        raise CorruptSuperblock(f"block size {block_size} does not match block log {block_log}")
    if not MIN_BLOCK_SIZE <= block_size <= MAX_BLOCK_SIZE:
        raise CorruptSuperblock(f"block size {block_size} outside [4096, 1048576]")
    if inode_start >= dir_start:
        raise CorruptSuperblock(
            f"inode table ({inode_start:#x}) must precede directory table ({dir_start:#x})")
    if inode_count == 0:
        raise CorruptSuperblock("image has no inodes")
    try:
        root = decode_meta_ref(root_ref)
    except InvalidRef as e:
        raise CorruptSuperblock(f"root inode reference: {e}") from e
    return Superblock(
        magic, inode_count, mkfs_time, block_size, fragment_count, compression_id,
        block_log, flags, id_count, major, minor, root, bytes_used, id_start,
        xattr_start, inode_start, dir_start, frag_start, export_start,
    )


# inodes

@dataclass
class Inode:
    inode_type: int
    permissions: int
    uid_idx: int
    gid_idx: int
    mtime: int
    inode_number: int

    is_dir = False
    is_file = False
    is_symlink = False

    @property
    def type_name(self):
        return TYPE_NAMES[self.inode_type]


@dataclass
class DirIndex:
    index: int
    start: int
    name: bytes


@dataclass
class DirectoryInode(Inode):
    start_block: int
    nlink: int
    file_size: int
    block_offset: int
    parent_inode: int
    index_count: int = 0
    xattr_idx: int = NO_XATTR
    index: list = field(default_factory=list)

    is_dir = True

    @property
    def listing_size(self):
        """Bytes of header+entry records, excluding the 3 phantom bytes for . and .."""
        return max(self.file_size - 3, 0)

    @property
    def listing_ref(self):
        return MetaRef(self.start_block, self.block_offset)


@dataclass
class FileInode(Inode):
    blocks_start: int
    frag_index: int
    frag_offset: int
    file_size: int
    block_sizes: list
    sparse: int = 0
    nlink: int = 1
    xattr_idx: int = NO_XATTR
    block_size: int = field(default=0, repr=False, compare=False)

    is_file = True

    @property
    def has_fragment(self):
        return self.frag_index != NO_FRAGMENT

    @property
    def tail_size(self):
        """Bytes stored in the fragment block (0 if none)."""
        if not self.has_fragment:
            return 0
        return self.file_size - self.block_size * len(self.block_sizes)


@dataclass
class SymlinkInode(Inode):
    nlink: int
    target_size: int
    target: bytes
    xattr_idx: int = NO_XATTR

    is_symlink = True


@dataclass
class SpecialInode(Inode):
    """Device, FIFO or socket: recognized and listable, never readable."""
    nlink: int
    rdev: int = 0
    xattr_idx: int = NO_XATTR


# aliases matching the variant names used in dumps and docs
BasicDirectory = ExtendedDirectory = DirectoryInode
BasicFile = ExtendedFile = FileInode
BasicSymlink = SymlinkInode


def _need(data, offset, size, what):
    if offset < 0 or len(data) - offset < size:
        raise TruncatedInode(f"{what}: need {size} bytes at {offset}, table has {len(data)}")


def block_count(file_size, block_size, frag_index):
    if frag_index == NO_FRAGMENT:
        return -(-file_size // block_size)
    return file_size // block_size


def parse_inode(data, offset, block_size):
    """Decode the inode at ``offset`` of a decompressed inode table.

    Returns ``(inode, consumed)``; ``consumed`` is the serialized length so a
    caller can step to the next inode.
    """
    _need(data, offset, INODE_HEADER_SIZE, "inode header")
    header = _INODE_HEADER.unpack_from(data, offset)
    itype = header[0]
    pos = offset + INODE_HEADER_SIZE

    if itype == DIR:
        _need(data, pos, _BASIC_DIR.size, "basic directory")
        start, nlink, size, boff, parent = _BASIC_DIR.unpack_from(data, pos)
        pos += _BASIC_DIR.size
        inode = DirectoryInode(*header, start, nlink, size, boff, parent)
    elif itype == LDIR:
        _need(data, pos, _EXT_DIR.size, "extended directory")
        nlink, size, start, parent, icount, boff, xattr = _EXT_DIR.unpack_from(data, pos)
        pos += _EXT_DIR.size
        index = []
        for _ in range(icount):
            _need(data, pos, _DIR_INDEX.size, "directory index")
            idx, istart, nsize = _DIR_INDEX.unpack_from(data, pos)
            pos += _DIR_INDEX.size
            _need(data, pos, nsize + 1, "directory index name")
            index.append(DirIndex(idx, istart, bytes(data[pos:pos + nsize + 1])))
            pos += nsize + 1
        inode = DirectoryInode(*header, start, nlink, size, boff, parent, icount, xattr, index)
    elif itype in (FILE, LFILE):
        if itype == FILE:
            _need(data, pos, _BASIC_FILE.size, "basic file")
            start, frag, foff, size = _BASIC_FILE.unpack_from(data, pos)
            pos += _BASIC_FILE.size
            sparse, nlink, xattr = 0, 1, NO_XATTR
        else:
            _need(data, pos, _EXT_FILE.size, "extended file")
            start, size, sparse, nlink, frag, foff, xattr = _EXT_FILE.unpack_from(data, pos)
            pos += _EXT_FILE.size
        nblocks = block_count(size, block_size, frag)
        if len(data) - pos < 4 * nblocks:
            raise BadBlockList(
                f"inode {header[5]}: {nblocks} block sizes run past the end of the inode table")
        sizes = list(struct.unpack_from(f"<{nblocks}I", data, pos))
        pos += 4 * nblocks
        inode = FileInode(*header, start, frag, foff, size, sizes, sparse, nlink, xattr,
                          block_size)
    elif itype in (SYMLINK, LSYMLINK):
        _need(data, pos, _SYMLINK.size, "symlink")
        nlink, tsize = _SYMLINK.unpack_from(data, pos)
        pos += _SYMLINK.size
        _need(data, pos, tsize, "symlink target")
        target = bytes(data[pos:pos + tsize])
        pos += tsize
        xattr = NO_XATTR
        if itype == LSYMLINK:
            _need(data, pos, 4, "symlink xattr")
            (xattr,) = struct.unpack_from("<I", data, pos)
            pos += 4
        inode = SymlinkInode(*header, nlink, tsize, target, xattr)
    elif itype in (BLKDEV, CHRDEV):
        _need(data, pos, _DEV.size, "device")
        nlink, rdev = _DEV.unpack_from(data, pos)
        pos += _DEV.size
        inode = SpecialInode(*header, nlink, rdev)
    elif itype in (LBLKDEV, LCHRDEV):
        _need(data, pos, _LDEV.size, "device")
        nlink, rdev, xattr = _LDEV.unpack_from(data, pos)
        pos += _LDEV.size
        inode = SpecialInode(*header, nlink, rdev, xattr)
    elif itype in (FIFO, SOCKET):
        _need(data, pos, _IPC.size, "ipc")
        (nlink,) = _IPC.unpack_from(data, pos)
        pos += _IPC.size
        inode = SpecialInode(*header, nlink)
    elif itype in (LFIFO, LSOCKET):
        _need(data, pos, _LIPC.size, "ipc")
        nlink, xattr = _LIPC.unpack_from(data, pos)
        pos += _LIPC.size
        inode = SpecialInode(*header, nlink, 0, xattr)
    else:
        raise UnknownInodeType(f"unknown inode type {itype} at offset {offset}")
    return inode, pos - offset


# directory table

@dataclass(frozen=True)
class DirHeader:
    count: int
    start: int
    inode_number: int


@dataclass(frozen=True)
class DirEntry:
    offset: int
    inode_delta: int
    entry_type: int
    name: bytes


def parse_dir_header(data, offset):
    if offset < 0 or len(data) - offset < DIR_HEADER_SIZE:
        raise TruncatedHeader(f"directory header at {offset} needs {DIR_HEADER_SIZE} bytes")
    count, start, inode_number = _DIR_HEADER.unpack_from(data, offset)
    if count > 255:
        raise CorruptDirectory(f"directory header at {offset} claims {count + 1} entries (max 256)")
    return DirHeader(count + 1, start, inode_number), DIR_HEADER_SIZE


def parse_dir_entry(data, offset):
    if offset < 0 or len(data) - offset < DIR_ENTRY_SIZE:
        raise TruncatedEntry(f"directory entry at {offset} needs {DIR_ENTRY_SIZE} bytes")
    ioff, delta, etype, nsize = _DIR_ENTRY.unpack_from(data, offset)
    length = nsize + 1
    start = offset + DIR_ENTRY_SIZE
    if len(data) - start < length:
        raise TruncatedEntry(f"directory entry name at {start} needs {length} bytes")
    name = bytes(data[start:start + length])
    if b"/" in name or b"\0" in name:
        raise InvalidName(f"directory entry name {name!r} contains '/' or NUL")
    return DirEntry(ioff, delta, etype, name), DIR_ENTRY_SIZE + length


# fragment and id tables

@dataclass(frozen=True)
class FragmentEntry:
    start: int
    size_word: int

    @property
    def on_disk_size(self):
        return self.size_word & BLOCK_SIZE_MASK

    @property
    def compressed(self):
        return not self.size_word & BLOCK_UNCOMPRESSED


def parse_fragment_entry(data, offset):
    if offset < 0 or len(data) - offset < FRAGMENT_ENTRY_SIZE:
        raise TruncatedHeader(f"fragment entry at {offset} needs {FRAGMENT_ENTRY_SIZE} bytes")
    start, size, _unused = _FRAGMENT.unpack_from(data, offset)
    return FragmentEntry(start, size), FRAGMENT_ENTRY_SIZE


def parse_u32(data, offset):
    if offset < 0 or len(data) - offset < 4:
        raise TruncatedHeader(f"u32 at {offset} runs past buffer end")
    return struct.unpack_from("<I", data, offset)[0]


def parse_u64(data, offset):
    if offset < 0 or len(data) - offset < 8:
        raise TruncatedHeader(f"u64 at {offset} runs past buffer end")
    return struct.unpack_from("<Q", data, offset)[0]

"""Metadata blocks and the tables stitched together from them."""

import struct
import threading
from collections import OrderedDict
from dataclasses import dataclass

from . import codec
from .errors import (
    BadBlockList, CorruptImage, CorruptSuperblock, IndexOutOfRange, OutOfBounds, OversizeBlock,
    TruncatedBlock, TruncatedInode, TruncatedTable,
)
from .ondisk import (
    FRAGMENT_ENTRY_SIZE, METADATA_SIZE, parse_fragment_entry, parse_inode,
)

META_UNCOMPRESSED = 0x8000
META_SIZE_MASK = 0x7FFF
FRAGMENTS_PER_BLOCK = METADATA_SIZE // FRAGMENT_ENTRY_SIZE  # 512
IDS_PER_BLOCK = METADATA_SIZE // 4  # 2048
LOOKUPS_PER_BLOCK = METADATA_SIZE // 8  # 1024
DEFAULT_CACHE_BLOCKS = 8


@dataclass(frozen=True)
class MetaBlock:
    offset: int
    payload: bytes
    disk_size: int
    was_compressed: bool

    @property
    def next_offset(self):
        return self.offset + self.disk_size


def read_meta_block(source, abs_offset, comp_id=codec.CompressionId.ZLIB):
    try:
        raw = source.read_at(abs_offset, 2)
    except OutOfBounds as e:
        raise TruncatedBlock(f"metadata header at {abs_offset:#x} lies past image end") from e
    (word,) = struct.unpack("<H", raw)
    size = word & META_SIZE_MASK
    compressed = not word & META_UNCOMPRESSED
    if size == 0 or size > METADATA_SIZE:
        raise OversizeBlock(f"metadata block at {abs_offset:#x} has on-disk size {size}")
    try:
        data = source.read_at(abs_offset + 2, size)
    except OutOfBounds as e:
        raise TruncatedBlock(
            f"metadata block at {abs_offset:#x} ({size} bytes) runs past image end") from e
    payload = codec.decompress(comp_id, data, METADATA_SIZE) if compressed else data
    return MetaBlock(abs_offset, payload, size + 2, compressed)


class MetadataReader:
    """Decompressing metadata-block reader with a small shared LRU cache.

    Blocks are keyed by absolute offset; the lock keeps the cache coherent
    when several threads walk tables at once.
    """

    def __init__(self, source, comp_id=codec.CompressionId.ZLIB, cache_blocks=DEFAULT_CACHE_BLOCKS):
        self.source = source
        self.comp_id = comp_id
        self.cache_blocks = cache_blocks
        self._cache = OrderedDict()
        self._lock = threading.Lock()

    def block(self, abs_offset):
        with self._lock:
            blk = self._cache.get(abs_offset)
            if blk is not None:
                self._cache.move_to_end(abs_offset)
                return blk
        blk = read_meta_block(self.source, abs_offset, self.comp_id)
        if self.cache_blocks:
            with self._lock:
                self._cache[abs_offset] = blk
                while len(self._cache) > self.cache_blocks:
                    self._cache.popitem(last=False)
        return blk

    def clear(self):
        with self._lock:
            self._cache.clear()

    def _chain(self, table_start, ref, limit):
        """Yield payload slices starting at ``ref``, one metadata block at a time."""
        offset = table_start + ref.block_start
        skip = ref.intra_offset
        while True:
            if limit is not None and offset >= limit:
                raise TruncatedTable(f"table walk reached {offset:#x}, past table end {limit:#x}")
            try:
                blk = self.block(offset)
            except (TruncatedBlock, OversizeBlock) as e:
                raise TruncatedTable(f"table chain broken at {offset:#x}: {e}") from e
            if skip > len(blk.payload):
                raise TruncatedTable(
                    f"offset {skip} lies beyond the {len(blk.payload)}-byte block at {offset:#x}")
            yield blk.payload[skip:]
            skip = 0
            offset = blk.next_offset

    def read_span(self, table_start, ref, length, limit=None):
        if length == 0:
            return b""
        parts = []
        have = 0
        for piece in self._chain(table_start, ref, limit):
            parts.append(piece)
            have += len(piece)
            if have >= length:
                break
        return b"".join(parts)[:length]

    def read_inode(self, table_start, ref, block_size, limit=None):
        """Fetch and decode the inode at ``ref``, growing the buffer across blocks as needed."""
        chain = self._chain(table_start, ref, limit)
        buf = bytearray(next(chain))
        while True:
            try:
                inode, _ = parse_inode(buf, 0, block_size)
                return inode
            except (TruncatedInode, BadBlockList):
                try:
                    buf += next(chain)
                except TruncatedTable as e:
                    raise TruncatedInode(f"inode at {ref} runs past the end of the inode table") from e

    def read_table(self, start, end):
        """Concatenate every block payload in ``[start, end)``; used by the dump walkers."""
        out = bytearray()
        offset = start
        while offset < end:
            blk = self.block(offset)
            out += blk.payload
            offset = blk.next_offset
        if offset != end:
            raise TruncatedTable(f"metadata blocks overrun table end {end:#x} (stopped at {offset:#x})")
        return bytes(out)

    def block_offsets(self, start, end):
        """On-disk offsets of each block in ``[start, end)``, relative to ``start``."""
        offsets = []
        offset = start
        while offset < end:
            offsets.append(offset - start)
            offset = self.block(offset).next_offset
        return offsets


def read_table_span(source, table_start, ref, length, comp_id=codec.CompressionId.ZLIB):
    return MetadataReader(source, comp_id, cache_blocks=0).read_span(table_start, ref, length)


def _read_index(source, start, count, what):
    """Read ``count`` little-endian u64 block locations at ``start``."""
    if count == 0:
        return []
    try:
        raw = source.read_at(start, 8 * count)
    except OutOfBounds as e:
        raise TruncatedTable(f"{what} index at {start:#x} ({count} entries) runs past image end") from e
    return list(struct.unpack(f"<{count}Q", raw))


def _read_indexed_table(reader, start, nbytes, per_block_bytes, what):
    nblocks = -(-nbytes // per_block_bytes)
    index = _read_index(reader.source, start, nblocks, what)
    out = bytearray()
    for i, loc in enumerate(index):
        expected = min(per_block_bytes, nbytes - i * per_block_bytes)
        try:
            blk = reader.block(loc)
        except (TruncatedBlock, OversizeBlock) as e:
            raise TruncatedTable(f"{what} block {i} at {loc:#x}: {e}") from e
        if len(blk.payload) < expected:
            raise TruncatedTable(
                f"{what} block {i} at {loc:#x} holds {len(blk.payload)} bytes, expected {expected}")
        out += blk.payload[:expected]
    return bytes(out), index


@dataclass(frozen=True)
class FragmentTable:
    entries: tuple
    index: tuple = ()

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]


def load_fragment_table(source, sb, reader=None):
    reader = reader or MetadataReader(source, sb.compression_id, cache_blocks=0)
    count = sb.fragment_count
    if count == 0:
        return FragmentTable(())
    data, index = _read_indexed_table(
        reader, sb.fragment_table_start, count * FRAGMENT_ENTRY_SIZE, METADATA_SIZE, "fragment table")
    entries = []
    for i in range(count):
        entry, _ = parse_fragment_entry(data, i * FRAGMENT_ENTRY_SIZE)
        if entry.start >= source.total_size:
            raise TruncatedTable(f"fragment {i} starts at {entry.start:#x}, past image end")
        if entry.on_disk_size > sb.block_size:
            raise CorruptImage(f"fragment {i} size {entry.on_disk_size} exceeds block size")
        entries.append(entry)
    return FragmentTable(tuple(entries), tuple(index))


@dataclass(frozen=True)
class IdTable:
    ids: tuple
    index: tuple = ()

    def __len__(self):
        return len(self.ids)

    def resolve(self, idx):
        if not 0 <= idx < len(self.ids):
            raise IndexOutOfRange(f"id index {idx} outside id table of {len(self.ids)}")
        return self.ids[idx]


def load_id_table(source, sb, reader=None):
    reader = reader or MetadataReader(source, sb.compression_id, cache_blocks=0)
    count = sb.id_count
    if count == 0:
        return IdTable(())
    data, index = _read_indexed_table(reader, sb.id_table_start, count * 4, METADATA_SIZE, "id table")
    return IdTable(struct.unpack(f"<{count}I", data), tuple(index))


def load_export_index(source, sb):
    """Block locations of the export (inode lookup) table; the table itself is not consumed."""
    if not sb.has_export_table:
        return []
    nblocks = -(-sb.inode_count * 8 // METADATA_SIZE)
    return _read_index(source, sb.export_table_start, nblocks, "export table")


def directory_table_end(sb, fragments, ids, export_index):
    """Upper bound of the directory table: the nearest structure that follows it."""
    candidates = [sb.fragment_table_start, sb.id_table_start, sb.bytes_used]
    candidates += fragments.index[:1]
    candidates += ids.index[:1]
    candidates += export_index[:1]
    if sb.has_export_table:
        candidates.append(sb.export_table_start)
    if sb.has_xattrs:
        candidates.append(sb.xattr_id_table_start)
    after = [c for c in candidates if c >= sb.directory_table_start]
    if not after:
        raise CorruptSuperblock("no table follows the directory table")
    return min(after)

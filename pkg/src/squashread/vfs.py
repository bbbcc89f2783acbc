"""Filesystem driver API over a mounted image.

The surface follows the eight-call bootloader driver model: :func:`probe`
builds a :class:`MountContext`; the context answers ``ls``, ``size``,
``read_file``, ``opendir`` and ``close``; a :class:`DirStream` answers
``readdir`` and ``closedir``.
"""

import os
import threading
from collections import OrderedDict
from dataclasses import dataclass

from . import codec
from .errors import (
    ContextBusy, ContextClosed, CorruptDirectory, CorruptImage, CorruptStream,
    CorruptSuperblock, FragmentIndexOutOfRange, IsADirectory, NotADirectory,
    OutOfBounds, PathNotFound, StreamClosed, SymlinkLoop, TruncatedEntry,
    TruncatedHeader,
)
from .metadata import (
    MetadataReader, directory_table_end, load_export_index, load_fragment_table,
    load_id_table,
)
from .ondisk import (
    BLOCK_SIZE_MASK, BLOCK_UNCOMPRESSED, DIR, DIR_ENTRY_SIZE, DIR_HEADER_SIZE, SUPERBLOCK_SIZE,
    SYMLINK, MetaRef, parse_dir_entry, parse_dir_header, parse_superblock,
)
from .storage import open_image

MAX_SYMLINK_DEPTH = 40


def _encode(name):
    return os.fsencode(name) if isinstance(name, str) else bytes(name)


def _decode(name):
    return os.fsdecode(name)


@dataclass(frozen=True)
class Dirent:
    """One directory record as handed out by :meth:`DirStream.readdir`."""
    name: str
    raw_name: bytes
    entry_type: int
    ref: MetaRef
    inode_number: int

    @property
    def is_dir(self):
        return self.entry_type == DIR

    @property
    def is_symlink(self):
        return self.entry_type == SYMLINK


@dataclass(frozen=True)
class ResolvedNode:
    inode: object
    canonical_path: str
    symlink_depth_used: int


@dataclass(frozen=True)
class ListingEntry:
    name: str
    kind: str  # "dir", "symlink", "file" or "other"
    size: int


@dataclass(frozen=True)
class Listing:
    path: str
    entries: tuple
    files: int
    dirs: int

    def render(self):
        lines = []
        for e in self.entries:
            if e.kind == "dir":
                lines.append(f"            {e.name}/")
            elif e.kind == "symlink":
                lines.append(f"    <SYM>   {e.name}")
            else:
                lines.append(f" {e.size:8d}   {e.name}")
        lines.append("")
        lines.append(f"{self.files} file(s), {self.dirs} dir(s)")
        return "\n".join(lines) + "\n"


def _records(data, inode_number=None):
    """Walk a directory listing: yields ``(header, entry)`` pairs in on-disk order."""
    pos = 0
    end = len(data)
    while pos < end:
        try:
            header, used = parse_dir_header(data, pos)
        except TruncatedHeader as e:
            raise CorruptDirectory(f"directory {inode_number}: {e}") from e
        pos += used
        for _ in range(header.count):
            try:
                entry, used = parse_dir_entry(data, pos)
            except TruncatedEntry as e:
                raise CorruptDirectory(f"directory {inode_number}: {e}") from e
            pos += used
            yield header, entry
    if pos != end:
        raise CorruptDirectory(f"directory {inode_number}: listing overruns its size")


def _dirent(header, entry):
    return Dirent(
        name=_decode(entry.name),
        raw_name=entry.name,
        entry_type=entry.entry_type,
        ref=MetaRef(header.start, entry.offset),
        inode_number=header.inode_number + entry.inode_delta,
    )


class DirStream:
    """Single-consumer cursor over one directory's entries."""

    def __init__(self, ctx, inode, path):
        self._ctx = ctx
        self.path = path
        self.inode = inode
        data = ctx._listing_bytes(inode)
        self._records = _records(data, inode.inode_number)
        self.emitted = 0
        self.header = None
        self._closed = False

    def readdir(self):
        """Next :class:`Dirent`, or ``None`` at end of directory."""
        if self._closed:
            raise StreamClosed(f"directory stream for {self.path} is closed")
        try:
            self.header, entry = next(self._records)
        except StopIteration:
            return None
        self.emitted += 1
        return _dirent(self.header, entry)

    def closedir(self):
        if not self._closed:
            self._closed = True
            self._records = None
            self._ctx._stream_closed(self)

    @property
    def closed(self):
        return self._closed

    def __iter__(self):
        while (d := self.readdir()) is not None:
            yield d

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.closedir()


class MountContext:
    """Everything a mounted image needs: source, superblock, fragment and id tables."""

    def __init__(self, source, sb, fragments, ids, export_index, reader, owns_source=False):
        self.source = source
        self.sb = sb
        self.fragments = fragments
        self.ids = ids
        self.export_index = tuple(export_index)
        self._reader = reader
        self._owns_source = owns_source
        self._dir_end = directory_table_end(sb, fragments, ids, self.export_index)
        self._frag_cache = OrderedDict()
        self._frag_lock = threading.Lock()
        self._streams = set()
        self._closed = False
        self.root = self.inode_at(sb.root_inode_ref)
        if not self.root.is_dir:
            raise CorruptSuperblock("root inode is not a directory")

    # lifecycle

    def _check_open(self):
        if self._closed:
            raise ContextClosed("mount context has been closed")

    def _stream_closed(self, stream):
        self._streams.discard(stream)

    @property
    def open_streams(self):
        return len(self._streams)

    @property
    def closed(self):
        return self._closed

    def close(self):
        if self._closed:
            return
        if self._streams:
            raise ContextBusy(f"{len(self._streams)} directory stream(s) still open")
        self._closed = True
        self._reader.clear()
        self._frag_cache.clear()
        if self._owns_source:
            self.source.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        for s in list(self._streams):
            s.closedir()
        self.close()

    # tables

    @property
    def directory_table_end(self):
        return self._dir_end

    @property
    def metadata(self):
        return self._reader

    def inode_at(self, ref):
        self._check_open()
        return self._reader.read_inode(
            self.sb.inode_table_start, ref, self.sb.block_size, limit=self.sb.directory_table_start)

    def _listing_bytes(self, inode):
        size = inode.listing_size
        if size == 0:
            return b""
        return self._reader.read_span(
            self.sb.directory_table_start, inode.listing_ref, size, limit=self._dir_end)

    def _entries(self, inode):
        for header, entry in _records(self._listing_bytes(inode), inode.inode_number):
            yield _dirent(header, entry)

    # path resolution

    def resolve(self, path, follow=True):
        """Walk ``path`` from the root, expanding symlinks; returns a :class:`ResolvedNode`.

        ``follow=False`` leaves a final symlink component unexpanded.
        """
        self._check_open()
        raw = _encode(path)
        want_dir = raw.endswith(b"/") and raw.strip(b"/") != b""
        pending = [c for c in raw.split(b"/") if c]
        pending.reverse()
        stack = []  # (name, inode) pairs below the root
        depth = 0
        while pending:
            comp = pending.pop()
            if comp == b".":
                continue
            if comp == b"..":
                if stack:
                    stack.pop()
                continue
            parent = stack[-1][1] if stack else self.root
            if not parent.is_dir:
                raise NotADirectory(f"{self._join(stack)}: not a directory")
            dirent = self._lookup(parent, comp)
            if dirent is None:
                raise PathNotFound(f"{self._join(stack + [(comp, None)])}: no such file or directory")
            inode = self.inode_at(dirent.ref)
            last = not pending
            if inode.is_symlink and (follow or not last or want_dir):
                depth += 1
                if depth > MAX_SYMLINK_DEPTH:
                    raise SymlinkLoop(
                        f"{_decode(raw)}: more than {MAX_SYMLINK_DEPTH} symlink expansions")
                target = inode.target
                if target.startswith(b"/"):
                    stack = []
                pending.extend(reversed([c for c in target.split(b"/") if c]))
                continue
            stack.append((comp, inode))
        node = stack[-1][1] if stack else self.root
        if want_dir and not node.is_dir:
            raise NotADirectory(f"{_decode(raw)}: not a directory")
        return ResolvedNode(node, self._join(stack), depth)

    @staticmethod
    def _join(stack):
        return "/" + "/".join(_decode(name) for name, _ in stack)

    def _lookup(self, dir_inode, name):
        # linear scan in on-disk order
        for d in self._entries(dir_inode):
            if d.raw_name == name:
                return d
        return None

    def _dir_inode(self, path):
        node = self.resolve(path)
        if not node.inode.is_dir:
            raise NotADirectory(f"{path}: not a directory")
        return node

    def _file_inode(self, path):
        node = self.resolve(path)
        if node.inode.is_dir:
            raise IsADirectory(f"{path}: is a directory")
        if not node.inode.is_file:
            raise IsADirectory(f"{path}: not a regular file")
        return node.inode

    # driver API

    def opendir(self, path):
        node = self._dir_inode(path)
        stream = DirStream(self, node.inode, node.canonical_path)
        self._streams.add(stream)
        return stream

    def ls(self, path="/"):
        self._check_open()
        node = self._dir_inode(path)
        entries = []
        files = dirs = 0
        for d in self._entries(node.inode):
            if d.is_dir:
                kind, size = "dir", 0
                dirs += 1
            elif d.is_symlink:
                kind, size = "symlink", 0
                files += 1
            else:
                inode = self.inode_at(d.ref)
                kind = "file" if inode.is_file else "other"
                size = inode.file_size if inode.is_file else 0
                files += 1
            entries.append(ListingEntry(d.name, kind, size))
        return Listing(node.canonical_path, tuple(entries), files, dirs)

    def size(self, path):
        return self._file_inode(path).file_size

    def read_file(self, path, start=0, length=None):
        """Read ``length`` bytes (``None`` = to end of file) from offset ``start``."""
        inode = self._file_inode(path)
        return self.read_inode_data(inode, start, length)

    def read_inode_data(self, inode, start=0, length=None):
        self._check_open()
        size = inode.file_size
        if start < 0 or start > size:
            raise OutOfBounds(f"start {start} outside file of {size} bytes")
        end = size if length is None else min(size, start + max(length, 0))
        if end <= start:
            return b""
        bs = self.sb.block_size
        nblocks = len(inode.block_sizes)
        out = bytearray()
        first = start // bs
        last = (end - 1) // bs
        pos = inode.blocks_start + sum(w & BLOCK_SIZE_MASK for w in inode.block_sizes[:first])
        for i in range(first, min(last, nblocks - 1) + 1):
            word = inode.block_sizes[i]
            want = min(bs, size - i * bs)
            block = self._data_block(pos, word, want)
            pos += word & BLOCK_SIZE_MASK
            lo = max(start - i * bs, 0)
            hi = min(end - i * bs, want)
            out += block[lo:hi]
        if last >= nblocks:
            tail = self._fragment_tail(inode)
            base = nblocks * bs
            out += tail[max(start - base, 0):end - base]
        if len(out) != end - start:
            raise CorruptImage(
                f"inode {inode.inode_number}: produced {len(out)} bytes, expected {end - start}")
        return bytes(out)

    def _data_block(self, pos, word, want):
        on_disk = word & BLOCK_SIZE_MASK
        if on_disk == 0:
            return bytes(want)  # sparse
        try:
            raw = self.source.read_at(pos, on_disk)
        except OutOfBounds as e:
            raise CorruptImage(f"data block at {pos:#x} runs past image end") from e
        if word & BLOCK_UNCOMPRESSED:
            data = raw
        else:
            data = codec.decompress(self.sb.compression_id, raw, self.sb.block_size)
        if len(data) != want:
            raise CorruptStream(f"data block at {pos:#x} holds {len(data)} bytes, expected {want}")
        return data

    def _fragment_block(self, index):
        with self._frag_lock:
            blk = self._frag_cache.get(index)
            if blk is not None:
                self._frag_cache.move_to_end(index)
                return blk
        if index >= len(self.fragments):
            raise FragmentIndexOutOfRange(
                f"fragment {index} outside fragment table of {len(self.fragments)}")
        entry = self.fragments[index]
        try:
            raw = self.source.read_at(entry.start, entry.on_disk_size)
        except OutOfBounds as e:
            raise CorruptImage(f"fragment block {index} runs past image end") from e
        if entry.compressed:
            blk = codec.decompress(self.sb.compression_id, raw, self.sb.block_size)
        else:
            blk = raw
        with self._frag_lock:
            self._frag_cache[index] = blk
            while len(self._frag_cache) > 2:
                self._frag_cache.popitem(last=False)
        return blk

    def _fragment_tail(self, inode):
        if not inode.has_fragment:
            raise CorruptImage(f"inode {inode.inode_number}: data ends before file size")
        blk = self._fragment_block(inode.frag_index)
        tail = inode.tail_size
        if inode.frag_offset + tail > len(blk):
            raise CorruptImage(
                f"inode {inode.inode_number}: tail [{inode.frag_offset}, +{tail}) outside "
                f"{len(blk)}-byte fragment block {inode.frag_index}")
        return blk[inode.frag_offset:inode.frag_offset + tail]

    def uid(self, inode):
        return self.ids.resolve(inode.uid_idx)

    def gid(self, inode):
        return self.ids.resolve(inode.gid_idx)


def probe(source, cache_blocks=8, owns_source=False):
    """Validate that ``source`` holds a SquashFS 4.0 image and mount it."""
    try:
        head = source.read_at(0, SUPERBLOCK_SIZE)
    except OutOfBounds as e:
        raise CorruptSuperblock(
            f"{source.identity}: {source.total_size} bytes is too small for a superblock") from e
    sb = parse_superblock(head)
    codec.check_supported(sb.compression_id)
    if sb.bytes_used > source.total_size:
        raise CorruptSuperblock(
            f"superblock claims {sb.bytes_used} bytes used but image holds {source.total_size}")
    for name in ("inode_table_start", "directory_table_start", "fragment_table_start",
                 "id_table_start"):
        if getattr(sb, name) > sb.bytes_used:
            raise CorruptSuperblock(f"{name} {getattr(sb, name):#x} lies past bytes used")
    reader = MetadataReader(source, sb.compression_id, cache_blocks)
    fragments = load_fragment_table(source, sb, reader)
    ids = load_id_table(source, sb, reader)
    export_index = load_export_index(source, sb)
    return MountContext(source, sb, fragments, ids, export_index, reader, owns_source)


def mount(path, **kw):
    """Open ``path`` and probe it; the context closes the file on :meth:`MountContext.close`."""
    source = open_image(path)
    try:
        return probe(source, owns_source=True, **kw)
    except BaseException:
        source.close()
        raise

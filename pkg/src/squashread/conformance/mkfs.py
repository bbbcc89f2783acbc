"""Pure-Python image builder following the mksquashfs 4.x layout.

Used by the conformance harness when no ``mksquashfs`` binary is installed.
It understands the subset of mksquashfs flags the harness pins::

    -comp gzip  -b N  -noI  -noD  -noF  -no-fragments  -always-use-fragments
    -no-exports  -no-duplicates  -all-root  -mkfs-time N

Layout decisions mirror mksquashfs: data and fragment blocks follow the
superblock in sorted depth-first order; inodes are written (and numbered)
post-order so the root comes last; then the inode, directory, fragment,
export and id tables; the image is padded to 4 KiB.

Encoding here is deliberately independent of :mod:`squashread.ondisk` so the
reader is never checked against itself.
"""

import hashlib
import os
import stat
import struct
import sys
import time
import zlib
from dataclasses import dataclass, field

META = 8192
BLOCK_RAW = 1 << 24
META_RAW = 0x8000
NO_FRAG = 0xFFFFFFFF
NO_XATTR = 0xFFFFFFFF
INVALID = 0xFFFFFFFFFFFFFFFF

T_DIR, T_FILE, T_SYMLINK, T_BLK, T_CHR, T_FIFO, T_SOCK = range(1, 8)
T_LDIR, T_LFILE = 8, 9


class BuildError(Exception):
    pass


@dataclass
class BuildOptions:
    block_size: int = 131072
    compress_inodes: bool = True
    compress_data: bool = True
    compress_fragments: bool = True
    fragments: bool = True
    always_use_fragments: bool = False
    exportable: bool = True
    duplicates: bool = True
    all_root: bool = False
    mkfs_time: int = None
    pad: bool = True

    @classmethod
    def from_flags(cls, flags):
        opts = cls()
        it = iter(flags)
        for flag in it:
            if flag == "-comp":
                comp = next(it, None)
                if comp != "gzip":
                    raise BuildError(f"compressor {comp!r} not supported by the builtin builder")
            elif flag == "-b":
                opts.block_size = _parse_size(next(it, ""))
            elif flag == "-noI":
                opts.compress_inodes = False
            elif flag == "-noD":
                opts.compress_data = False
            elif flag == "-noF":
                opts.compress_fragments = False
            elif flag == "-no-fragments":
                opts.fragments = False
            elif flag == "-always-use-fragments":
                opts.always_use_fragments = True
            elif flag == "-no-exports":
                opts.exportable = False
            elif flag == "-no-duplicates":
                opts.duplicates = False
            elif flag == "-all-root":
                opts.all_root = True
            elif flag == "-mkfs-time":
                opts.mkfs_time = int(next(it, "0"))
            elif flag in ("-noappend", "-quiet", "-no-progress", "-no-xattrs"):
                pass
            else:
                raise BuildError(f"unsupported builder flag {flag!r}")
        bs = opts.block_size
        if bs & (bs - 1) or not 4096 <= bs <= 1 << 20:
            raise BuildError(f"block size {bs} must be a power of two in [4K, 1M]")
        return opts

    @property
    def flags(self):
        return ((not self.compress_inodes) * 0x01 | (not self.compress_data) * 0x02
                | (not self.compress_fragments) * 0x08 | (not self.fragments) * 0x10
                | self.always_use_fragments * 0x20 | self.duplicates * 0x40
                | self.exportable * 0x80)


def _parse_size(text):
    mult = 1
    if text[-1:].upper() == "K":
        mult, text = 1024, text[:-1]
    elif text[-1:].upper() == "M":
        mult, text = 1 << 20, text[:-1]
    try:
        return int(text) * mult
    except ValueError:
        raise BuildError(f"bad block size {text!r}") from None


def _squash(data, compress):
    """Compress if it helps; returns (stored bytes, stored_raw)."""
    if compress:
        packed = zlib.compress(data, 9)
        if len(packed) < len(data):
            return packed, False
    return bytes(data), True


class _MetaWriter:
    """Accumulates a metadata table and cuts it into 8 KiB blocks."""

    def __init__(self, compress):
        self.compress = compress
        self.buf = bytearray()
        self.out = bytearray()

    def ref(self):
        return len(self.out), len(self.buf)

    def write(self, data):
        self.buf += data
        while len(self.buf) >= META:
            self._emit(self.buf[:META])
            del self.buf[:META]

    def _emit(self, chunk):
        stored, raw = _squash(chunk, self.compress)
        self.out += struct.pack("<H", len(stored) | (META_RAW if raw else 0)) + stored

    def finish(self):
        if self.buf:
            self._emit(self.buf)
            self.buf = bytearray()
        return bytes(self.out)


@dataclass
class _Node:
    name: bytes
    st: os.stat_result
    path: bytes
    children: list = field(default_factory=list)
    number: int = 0
    ref: tuple = None
    # regular files
    blocks_start: int = 0
    block_sizes: list = field(default_factory=list)
    frag_index: int = NO_FRAG
    frag_offset: int = 0
    sparse: int = 0
    size: int = 0
    target: bytes = b""

    @property
    def kind(self):
        m = self.st.st_mode
        if stat.S_ISDIR(m):
            return T_DIR
        if stat.S_ISREG(m):
            return T_FILE
        if stat.S_ISLNK(m):
            return T_SYMLINK
        if stat.S_ISBLK(m):
            return T_BLK
        if stat.S_ISCHR(m):
            return T_CHR
        if stat.S_ISFIFO(m):
            return T_FIFO
        if stat.S_ISSOCK(m):
            return T_SOCK
        raise BuildError(f"{self.path!r}: unsupported file type")


def _scan(path, name=b""):
    st = os.lstat(path)
    node = _Node(name, st, path)
    if stat.S_ISDIR(st.st_mode):
        for child in sorted(os.listdir(path)):
            node.children.append(_scan(os.path.join(path, child), child))
    elif stat.S_ISLNK(st.st_mode):
        node.target = os.readlink(path)
    return node


class _Builder:
    def __init__(self, opts):
        self.o = opts
        self.out = bytearray(96)
        self.frag_buf = bytearray()
        self.frag_entries = []
        self.dupes = {}
        self.ids = []
        self.next_number = 1
        self.inodes = _MetaWriter(opts.compress_inodes)
        self.dirs = _MetaWriter(opts.compress_inodes)
        self.export = {}

    # data area

    def _flush_fragment(self):
        if not self.frag_buf:
            return
        stored, raw = _squash(self.frag_buf, self.o.compress_fragments)
        self.frag_entries.append((len(self.out), len(stored) | (BLOCK_RAW if raw else 0)))
        self.out += stored
        self.frag_buf = bytearray()

    def _add_fragment(self, tail):
        if len(self.frag_buf) + len(tail) > self.o.block_size:
            self._flush_fragment()
        index, offset = len(self.frag_entries), len(self.frag_buf)
        self.frag_buf += tail
        return index, offset

    def _use_fragment(self, size):
        bs = self.o.block_size
        if not self.o.fragments or size == 0:
            return False
        return size < bs or (self.o.always_use_fragments and size % bs != 0)

    def write_data(self, node):
        if node.kind == T_DIR:
            for child in node.children:
                self.write_data(child)
            return
        if node.kind != T_FILE:
            return
        with open(node.path, "rb") as f:
            data = f.read()
        node.size = len(data)
        key = (len(data), hashlib.sha256(data).digest())
        if self.o.duplicates and key in self.dupes:
            src = self.dupes[key]
            node.blocks_start, node.block_sizes = src.blocks_start, src.block_sizes
            node.frag_index, node.frag_offset, node.sparse = src.frag_index, src.frag_offset, src.sparse
            return
        bs = self.o.block_size
        frag = self._use_fragment(len(data))
        nfull = len(data) // bs if frag else -(-len(data) // bs)
        node.blocks_start = len(self.out)
        for i in range(nfull):
            chunk = data[i * bs:(i + 1) * bs]
            if chunk.count(0) != len(chunk):
                stored, raw = _squash(chunk, self.o.compress_data)
                node.block_sizes.append(len(stored) | (BLOCK_RAW if raw else 0))
                self.out += stored
            else:
                node.block_sizes.append(0)
                node.sparse += len(chunk)
        if frag:
            node.frag_index, node.frag_offset = self._add_fragment(data[nfull * bs:])
        self.dupes[key] = node

    # numbering and metadata

    def number(self, node):
        for child in node.children:
            if child.kind == T_DIR:
                self.number(child)
            else:
                child.number = self.next_number
                self.next_number += 1
        node.number = self.next_number
        self.next_number += 1

    def _id(self, value):
        if value not in self.ids:
            self.ids.append(value)
        return self.ids.index(value)

    def _header(self, node, itype):
        st = node.st
        uid, gid = (0, 0) if self.o.all_root else (st.st_uid, st.st_gid)
        return struct.pack("<HHHHII", itype, st.st_mode & 0o7777, self._id(uid), self._id(gid),
                           int(st.st_mtime) & 0xFFFFFFFF, node.number)

    def _emit_inode(self, node, body_type, body):
        node.ref = self.inodes.ref()
        self.inodes.write(self._header(node, body_type) + body)
        self.export[node.number] = node.ref

    def write_inode(self, node, parent_number):
        kind = node.kind
        if kind == T_DIR:
            for child in node.children:
                self.write_inode(child, node.number)
            self._write_dir(node, parent_number)
        elif kind == T_FILE:
            extended = (node.sparse > 0 or node.size >= 1 << 32 or node.blocks_start >= 1 << 32)
            blist = struct.pack(f"<{len(node.block_sizes)}I", *node.block_sizes)
            if extended:
                body = struct.pack("<QQQIIII", node.blocks_start, node.size, node.sparse, 1,
                                   node.frag_index, node.frag_offset, NO_XATTR)
                self._emit_inode(node, T_LFILE, body + blist)
            else:
                start = node.blocks_start if node.block_sizes else 0
                body = struct.pack("<IIII", start, node.frag_index, node.frag_offset, node.size)
                self._emit_inode(node, T_FILE, body + blist)
        elif kind == T_SYMLINK:
            body = struct.pack("<II", 1, len(node.target)) + node.target
            self._emit_inode(node, T_SYMLINK, body)
        elif kind in (T_BLK, T_CHR):
            rdev = node.st.st_rdev
            major, minor = os.major(rdev), os.minor(rdev)
            encoded = (minor & 0xFF) | (major << 8) | ((minor & ~0xFF) << 12)
            self._emit_inode(node, kind, struct.pack("<II", node.st.st_nlink, encoded))
        else:
            self._emit_inode(node, kind, struct.pack("<I", node.st.st_nlink))

    def _headers(self, node):
        """Split a directory's entries into header runs, mksquashfs style."""
        runs = []
        cur = None
        pos = since_index = 0
        for child in node.children:
            block, offset = child.ref
            cost = 8 + len(child.name)
            if (cur is None or len(cur[1]) == 256 or block != cur[0][0]
                    or not -32768 <= child.number - cur[0][1] <= 32767
                    or pos + cost - since_index > META):
                if cur is not None and pos + cost - since_index > META:
                    since_index = pos
                cur = ((block, child.number), [])
                runs.append(cur)
                pos += 12
            cur[1].append(child)
            pos += cost
        return runs

    def _write_dir(self, node, parent_number):
        start = self.dirs.ref()
        index = []
        size = 0
        last_block = start[0]
        for i, ((block, base), children) in enumerate(self._headers(node)):
            here = self.dirs.ref()
            if i and here[0] != last_block:
                index.append((size, here[0], children[0].name))
                last_block = here[0]
            rec = bytearray(struct.pack("<III", len(children) - 1, block, base))
            for c in children:
                ctype = c.kind
                rec += struct.pack("<HhHH", c.ref[1], c.number - base, ctype, len(c.name) - 1)
                rec += c.name
            self.dirs.write(rec)
            size += len(rec)
        nlink = 2 + sum(1 for c in node.children if c.kind == T_DIR)
        file_size = size + 3
        if index or file_size > 0xFFFF:
            body = struct.pack("<IIIIHHI", nlink, file_size, start[0], parent_number,
                               len(index), start[1], NO_XATTR)
            for idx, blk, name in index:
                body += struct.pack("<III", idx, blk, len(name) - 1) + name
            self._emit_inode(node, T_LDIR, body)
        else:
            body = struct.pack("<IIHHI", start[0], nlink, file_size, start[1], parent_number)
            self._emit_inode(node, T_DIR, body)

    # tables

    def _table(self, raw, compress):
        """Write ``raw`` as metadata blocks plus a u64 index; returns the index position."""
        locs = []
        for i in range(0, len(raw), META):
            locs.append(len(self.out))
            stored, is_raw = _squash(raw[i:i + META], compress)
            self.out += struct.pack("<H", len(stored) | (META_RAW if is_raw else 0)) + stored
        pos = len(self.out)
        self.out += struct.pack(f"<{len(locs)}Q", *locs)
        return pos

    def build(self, root, mkfs_time):
        self.write_data(root)
        self._flush_fragment()
        self.number(root)
        count = root.number
        self.write_inode(root, count + 1)

        inode_start = len(self.out)
        self.out += self.inodes.finish()
        dir_start = len(self.out)
        self.out += self.dirs.finish()

        frag_raw = b"".join(struct.pack("<QII", s, w, 0) for s, w in self.frag_entries)
        frag_start = self._table(frag_raw, self.o.compress_fragments) if frag_raw else len(self.out)
        export_start = INVALID
        if self.o.exportable:
            refs = b"".join(struct.pack("<Q", (self.export[n][0] << 16) | self.export[n][1])
                            for n in range(1, count + 1))
            export_start = self._table(refs, self.o.compress_inodes)
        id_start = self._table(struct.pack(f"<{len(self.ids)}I", *self.ids), self.o.compress_inodes)
        bytes_used = len(self.out)

        bs = self.o.block_size
        root_ref = (root.ref[0] << 16) | root.ref[1]
        self.out[:96] = struct.pack(
            "<IIIIIHHHHHHQQQQQQQQ", 0x73717368, count, mkfs_time, bs, len(self.frag_entries),
            1, bs.bit_length() - 1, self.o.flags, len(self.ids), 4, 0, root_ref, bytes_used,
            id_start, INVALID, inode_start, dir_start, frag_start, export_start)
        if self.o.pad and len(self.out) % 4096:
            self.out += bytes(4096 - len(self.out) % 4096)
        return bytes(self.out)


def build_bytes(source_dir, options=None):
    opts = options or BuildOptions()
    src = os.fsencode(source_dir)
    if not os.path.isdir(src):
        raise BuildError(f"{source_dir}: not a directory")
    mkfs_time = opts.mkfs_time
    if mkfs_time is None:
        env = os.environ.get("SOURCE_DATE_EPOCH")
        mkfs_time = int(env) if env else int(time.time())
    return _Builder(opts).build(_scan(src), mkfs_time)


def make_image(source_dir, image_path, flags=()):
    """Build ``image_path`` from ``source_dir``; ``flags`` use mksquashfs spelling."""
    data = build_bytes(source_dir, BuildOptions.from_flags(list(flags)))
    with open(image_path, "wb") as f:
        f.write(data)
    return image_path


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) < 2:
        print("usage: python -m squashread.conformance.mkfs <source-dir> <image> [flags]",
              file=sys.stderr)
        return 2
    try:
        make_image(argv[0], argv[1], argv[2:])
    except BuildError as e:
        print(f"mkfs: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Human-readable section dumps: superblock, inode table, directory table, entries."""

import enum
import time
from dataclasses import dataclass

from . import codec
from .errors import CorruptImage, IsADirectory, NotADirectory, SquashfsError
from .ondisk import METADATA_SIZE, MetaRef, parse_inode
from .vfs import _records

RULE = "--- --- ---"


class Section(enum.Enum):
    SUPERBLOCK = "superblock"
    INODE_TABLE = "inode_table"
    DIRECTORY_TABLE = "directory_table"
    ENTRY = "entry"


@dataclass(frozen=True)
class DumpReport:
    section: Section
    text: str
    data: bytes = None  # raw file content for entry dumps in file mode


def format_time(ts, localtime=False):
    if localtime:
        return time.strftime("%a %Y-%m-%d %H:%M:%S %Z", time.localtime(ts))
    return time.strftime("%a %Y-%m-%d %H:%M:%S UTC", time.gmtime(ts))


def format_block_size(n):
    for unit, shift in (("MiB", 20), ("KiB", 10)):
        if n >= 1 << shift and n % (1 << shift) == 0:
            return f"{n} bytes ({n >> shift} {unit})"
    return f"{n} bytes"


def dump_superblock(ctx, localtime=False):
    sb = ctx.sb
    magic = sb.magic.to_bytes(4, "big").decode("latin-1")
    lines = [
        "--- SUPER BLOCK INFORMATION ---",
        f"Magic number: {magic}",
        f"Number of inodes: {sb.inode_count}",
        f"Filesystem creation date: {format_time(sb.mkfs_time, localtime)}",
        f"Block size: {format_block_size(sb.block_size)}",
        f"Number of fragments: {sb.fragment_count}",
        f"Number of ids: {sb.id_count}",
        f"Block log: {sb.block_log}",
        f"Compression type: {codec.compression_name(sb.compression_id)}",
        f"Super Block Flags: {sb.flags:#x}",
        f"Major/Minor numbers: {sb.version_major}/{sb.version_minor}",
        f"Root inode: {sb.root_inode_ref.raw:#x}",
        f"Bytes used: {sb.bytes_used}",
        f"Id table start: {sb.id_table_start:#x}",
        f"(xattr) Id table start: {sb.xattr_id_table_start:#x}",
        f"Inode table start: {sb.inode_table_start:#x}",
        f"Directory table start: {sb.directory_table_start:#x}",
        f"Fragment table start: {sb.fragment_table_start:#x}",
        f"Lookup table start: {sb.export_table_start:#x}",
        "--- SUPER BLOCK FLAGS ---",
        *sb.flag_names,
    ]
    return DumpReport(Section.SUPERBLOCK, "\n".join(lines) + "\n")


def read_inode_table(ctx):
    """Decode the whole inode table in on-disk order.

    Returns ``(ref, inode)`` pairs; ``ref`` is the metadata reference a
    directory entry would use to reach the inode.
    """
    sb = ctx.sb
    reader = ctx.metadata
    blocks = reader.block_offsets(sb.inode_table_start, sb.directory_table_start)
    data = reader.read_table(sb.inode_table_start, sb.directory_table_start)
    out = []
    pos = 0
    for i in range(1, sb.inode_count + 1):
        try:
            inode, used = parse_inode(data, pos, sb.block_size)
        except SquashfsError as e:
            raise type(e)(f"inode {i}/{sb.inode_count}: {e}") from e
        block = pos // METADATA_SIZE
        if block >= len(blocks):
            raise CorruptImage(f"inode {i}/{sb.inode_count} lies past the inode table")
        out.append((MetaRef(blocks[block], pos % METADATA_SIZE), inode))
        pos += used
    return out


def _inode_lines(inode, localtime):
    lines = [
        f"Permissions: {inode.permissions:#06x}",
        f"UID index: {inode.uid_idx:#06x}",
        f"GID index: {inode.gid_idx:#06x}",
        f"Modified time: {format_time(inode.mtime, localtime)}",
        f"Inode number: {inode.inode_number}",
        f"Inode type: {inode.type_name}",
    ]
    if inode.is_dir:
        lines += [
            f"Start block: {inode.start_block:#010x}",
            f"Hard links: {inode.nlink}",
            f"File size: {inode.file_size}",
            f"Block offset: {inode.block_offset:#06x}",
            f"Parent inode number: {inode.parent_inode}",
        ]
        if inode.inode_type != 1:
            lines += [f"Index count: {inode.index_count}", f"Xattr index: {inode.xattr_idx:#010x}"]
    elif inode.is_file:
        lines += [
            f"Start block: {inode.blocks_start:#010x}",
            f"Fragment block index: {inode.frag_index:#010x}",
            f"Fragment block offset: {inode.frag_offset:#010x}",
            f"(Uncompressed) File size: {inode.file_size}",
        ]
        if inode.inode_type != 2:
            lines += [f"Hard links: {inode.nlink}", f"Sparse bytes: {inode.sparse}",
                      f"Xattr index: {inode.xattr_idx:#010x}"]
        if inode.block_sizes:
            lines.append("Block sizes: " + " ".join(f"{w:#x}" for w in inode.block_sizes))
    elif inode.is_symlink:
        lines += [
            f"Hard links: {inode.nlink}",
            f"Symlink size: {inode.target_size}",
            f"Target path: {inode.target.decode('utf-8', 'backslashreplace')}",
        ]
    else:
        lines.append(f"Hard links: {inode.nlink}")
        if inode.inode_type in (4, 5, 11, 12):
            lines.append(f"Device number: {inode.rdev:#x}")
    return lines


def dump_inode_table(ctx, localtime=False):
    table = read_inode_table(ctx)
    n = len(table)
    lines = [RULE]
    for i, (_, inode) in enumerate(table, 1):
        lines += [f"{{Inode {i}/{n}}}", RULE]
        lines += _inode_lines(inode, localtime)
        lines.append("")
    return DumpReport(Section.INODE_TABLE, "\n".join(lines) + "\n")


def _numbered(entries):
    return [f"{i}) {name}" for i, name in enumerate(entries, 1)]


def dump_directory_table(ctx):
    table = read_inode_table(ctx)
    dirs = [inode for _, inode in table if inode.is_dir]
    names = {}
    listings = {}
    for d in dirs:
        data = ctx._listing_bytes(d)
        entries = []
        for header, entry in _records(data, d.inode_number):
            names[header.inode_number + entry.inode_delta] = entry.name
            entries.append(entry.name.decode("utf-8", "backslashreplace"))
        listings[d.inode_number] = entries
    root_number = ctx.root.inode_number
    ordered = sorted(dirs, key=lambda d: (d.start_block, d.block_offset, d.listing_size > 0))
    lines = []
    k = 0
    for d in ordered:
        if d.inode_number == root_number:
            continue
        k += 1
        name = names.get(d.inode_number, b"?").decode("utf-8", "backslashreplace")
        lines += [f"Directory {k}", f"Name: {name}"]
        lines += _numbered(listings[d.inode_number]) or ["Empty directory."]
        lines.append("")
    lines.append("Root directory")
    lines += _numbered(listings.get(root_number, []))
    lines.append("")
    return DumpReport(Section.DIRECTORY_TABLE, "\n".join(lines) + "\n")


def dump_entry(ctx, path):
    """Directory listing when ``path`` ends in '/', raw file content otherwise."""
    if path.endswith("/"):
        node = ctx.resolve(path)
        if not node.inode.is_dir:
            raise NotADirectory(f"{path}: not a directory")
        names = [d.name for d in ctx._entries(node.inode)]
        lines = _numbered(names) or ["Empty directory."]
        return DumpReport(Section.ENTRY, "\n".join(lines) + "\n")
    node = ctx.resolve(path)
    if node.inode.is_dir:
        raise IsADirectory(f"{path}: is a directory (end the path with '/' to list it)")
    data = ctx.read_file(path)
    return DumpReport(Section.ENTRY, data.decode("utf-8", "replace"), data)

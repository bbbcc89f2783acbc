"""Build reference images and check the reader against an independent oracle.

Builders, in order of preference:

* ``mksquashfs`` found on ``PATH`` (or named by ``SQUASHREAD_MKSQUASHFS``),
  run as ``mksquashfs <src> <img> -comp gzip -noappend -no-progress [flags]``;
* the pure-Python builder in :mod:`squashread.conformance.mkfs`.

Oracles, in order of preference:

* ``unsquashfs`` (or ``SQUASHREAD_UNSQUASHFS``) via ``-s`` and ``-cat``;
* the PySquashfsImage package.
"""

import contextlib
import os
import re
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field

from .. import vfs
from ..errors import PathNotFound, SquashfsError, SymlinkLoop
from . import mkfs
from .corpus import generate_tree

PINNED_FLAGS = ("-comp", "gzip", "-noappend", "-no-progress", "-quiet")


class ToolMissing(Exception):
    pass


class BuilderFailed(Exception):
    pass


class ExtractionMismatch(AssertionError):
    def __init__(self, report):
        self.report = report
        lines = [f"{p}: {why}" for p, why in report.mismatches[:20]]
        super().__init__(f"{len(report.mismatches)} mismatches:\n" + "\n".join(lines))


def find_tool(name):
    env = os.environ.get(f"SQUASHREAD_{name.upper()}")
    if env:
        return env if os.path.exists(env) else None
    return shutil.which(name)


# builders

@dataclass(frozen=True)
class Builder:
    name: str
    path: str = None

    def build(self, source_dir, image_path, flags=()):
        if self.path is None:
            try:
                mkfs.make_image(source_dir, image_path, ("-comp", "gzip", *flags))
            except mkfs.BuildError as e:
                raise BuilderFailed(str(e)) from e
            return image_path
        cmd = [self.path, source_dir, image_path, *PINNED_FLAGS, *flags]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise BuilderFailed(f"{' '.join(cmd)} exited {proc.returncode}: {proc.stderr.strip()}")
        return image_path


def get_builder(kind="auto"):
    """``kind`` is "auto", "mksquashfs" or "builtin"."""
    if kind in ("auto", "mksquashfs"):
        path = find_tool("mksquashfs")
        if path:
            return Builder("mksquashfs", path)
        if kind == "mksquashfs":
            raise ToolMissing("mksquashfs not found")
    return Builder("builtin")


def build_image(tree_root, image_path, flags=(), builder=None):
    return (builder or get_builder()).build(tree_root, image_path, flags)


@contextlib.contextmanager
def built_image(spec_or_fn, flags=(), builder=None):
    """Generate a tree, build its image, yield ``(image_path, tree)``, then delete both.

    ``spec_or_fn`` is a :class:`CorpusSpec` or a callable taking the tree root.
    """
    with tempfile.TemporaryDirectory(prefix="squashread-") as tmp:
        root = os.path.join(tmp, "src")
        os.mkdir(root)
        if callable(spec_or_fn):
            tree = spec_or_fn(root)
        else:
            tree = generate_tree(spec_or_fn, root)
        image = os.path.join(tmp, "image.sqfs")
        build_image(root, image, flags, builder)
        yield image, tree


# oracles

_SUPER_PATTERNS = {
    "bytes_used": r"Filesystem size (\d+) bytes",
    "block_size": r"Block size (\d+)",
    "fragment_count": r"Number of fragments (\d+)",
    "inode_count": r"Number of inodes (\d+)",
    "id_count": r"Number of ids (\d+)",
    "compression": r"Compression (\w+)",
}


def parse_unsquashfs_super(text):
    """Pick the numeric fields out of ``unsquashfs -s`` output; absent fields are skipped."""
    out = {}
    for key, pat in _SUPER_PATTERNS.items():
        m = re.search(pat, text)
        if m:
            out[key] = m.group(1) if key == "compression" else int(m.group(1))
    m = re.search(r"SQUASHFS (\d+):(\d+) superblock", text)
    if m:
        out["version"] = (int(m.group(1)), int(m.group(2)))
    return out


class UnsquashfsOracle:
    name = "unsquashfs"

    def __init__(self, image, path):
        self.image = image
        self.tool = path

    def superblock(self):
        proc = subprocess.run([self.tool, "-s", self.image], capture_output=True, text=True)
        if proc.returncode != 0:
            raise BuilderFailed(proc.stderr.strip())
        return parse_unsquashfs_super(proc.stdout)

    def cat(self, path):
        proc = subprocess.run([self.tool, "-cat", self.image, path], capture_output=True)
        if proc.returncode != 0:
            raise BuilderFailed(proc.stderr.decode(errors="replace").strip())
        return proc.stdout

    def close(self):
        pass


class PySquashfsOracle:
    name = "PySquashfsImage"
    _COMP = {1: "gzip", 2: "lzma", 3: "lzo", 4: "xz", 5: "lz4", 6: "zstd"}

    def __init__(self, image):
        try:
            from PySquashfsImage import SquashFsImage
        except ImportError as e:
            raise ToolMissing("neither unsquashfs nor PySquashfsImage is available") from e
        self._im = SquashFsImage.from_file(image)

    def superblock(self):
        s = self._im.sblk
        return {
            "bytes_used": s.bytes_used,
            "block_size": s.block_size,
            "fragment_count": s.fragments,
            "inode_count": s.inodes,
            "id_count": s.no_ids,
            "compression": self._COMP.get(s.compression, str(s.compression)),
            "version": (s.s_major, s.s_minor),
            "block_log": s.block_log,
            "flags": s.flags,
            "root_inode": s.root_inode,
            "inode_table_start": s.inode_table_start,
            "directory_table_start": s.directory_table_start,
            "fragment_table_start": s.fragment_table_start,
            "lookup_table_start": s.lookup_table_start,
            "id_table_start": s.id_table_start,
        }

    def cat(self, path):
        return self._im.select(path).read_bytes()

    def close(self):
        self._im.close()


def get_oracle(image, kind="auto"):
    """``kind`` is "auto", "unsquashfs" or "pysquashfsimage"."""
    if kind in ("auto", "unsquashfs"):
        path = find_tool("unsquashfs")
        if path:
            return UnsquashfsOracle(image, path)
        if kind == "unsquashfs":
            raise ToolMissing("unsquashfs not found")
    return PySquashfsOracle(image)


# verification

@dataclass
class VerifyReport:
    files: int = 0
    symlinks: int = 0
    bytes: int = 0
    mismatches: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.mismatches


def verify_extraction(image, tree, oracle="auto", ctx=None):
    """Compare every file of ``tree`` against the reader and the oracle."""
    report = VerifyReport()
    own_ctx = ctx is None
    ctx = ctx or vfs.mount(image)
    orc = get_oracle(image, oracle) if isinstance(oracle, str) else oracle
    try:
        for path in sorted(tree.files):
            with open(tree.host_path(path), "rb") as f:
                want = f.read()
            report.files += 1
            report.bytes += len(want)
            try:
                got = ctx.read_file(path)
                size = ctx.size(path)
            except SquashfsError as e:
                report.mismatches.append((path, f"reader raised {type(e).__name__}: {e}"))
                continue
            if got != want:
                report.mismatches.append((path, f"content differs ({len(got)} vs {len(want)} bytes)"))
            if size != len(got):
                report.mismatches.append((path, f"size() {size} != extracted {len(got)}"))
            if orc is not None and orc.cat(path) != got:
                report.mismatches.append((path, f"{orc.name} output differs"))
        for path, (target, kind) in sorted(tree.symlinks.items()):
            report.symlinks += 1
            node = ctx.resolve(path, follow=False)
            if not node.inode.is_symlink or node.inode.target != os.fsencode(target):
                report.mismatches.append((path, "symlink target differs"))
                continue
            expected = {"loop": SymlinkLoop, "dangling": PathNotFound}.get(kind)
            try:
                ctx.resolve(path)
            except SquashfsError as e:
                if expected is None or not isinstance(e, expected):
                    report.mismatches.append((path, f"resolve raised {type(e).__name__}"))
            else:
                if expected is not None:
                    report.mismatches.append((path, f"resolve did not raise {expected.__name__}"))
    finally:
        if orc is not None and isinstance(oracle, str):
            orc.close()
        if own_ctx:
            ctx.close()
    return report


def check_extraction(image, tree, oracle="auto"):
    report = verify_extraction(image, tree, oracle)
    if not report.ok:
        raise ExtractionMismatch(report)
    return report

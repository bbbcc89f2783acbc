"""``sqfs``: section dumps plus ``ls``/``load`` over a SquashFS image."""

import argparse
import enum
import sys
from dataclasses import dataclass

from . import dump
from .errors import (
    BadMagic, CorruptImage, ImageOpenError, LookupFailed, NotFound, OutOfBounds, SquashfsError,
    UnsupportedCompression,
)
from .vfs import mount

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PROBE = 3
EXIT_NOT_FOUND = 4
EXIT_CORRUPT = 5

USAGE = """\
usage: sqfs [-h]
       sqfs [-s] [-i] [-d] [--localtime] <fs-image>
       sqfs -e <fs-image> /path/to/dir/
       sqfs -e <fs-image> /path/to/file
       sqfs ls <fs-image> [directory]
       sqfs load <fs-image> <file> -o <output> [bytes [pos]]

Inspect a SquashFS 4.0 image.

Options:
       -h: print this message and exit
       -s: dump the superblock
       -i: dump the inode table
       -d: dump the directory table
       -e: dump one file's content, or a directory's entries
           when the path ends with '/'
       --localtime: show timestamps in the local timezone (default UTC)

Commands:
       ls:   list a directory (default /)
       load: copy a file out of the image; 'pos' is the byte offset
             to start from and requires 'bytes'; 'bytes' of 0 or
             omitted reads to end of file

Parameters:
       <fs-image>: path to the filesystem image
"""


class Mode(enum.Enum):
    HELP = "help"
    DUMP_SUPER = "dump_super"
    DUMP_INODES = "dump_inodes"
    DUMP_DIRS = "dump_dirs"
    EXTRACT = "extract"
    LS = "ls"
    LOAD = "load"


class UsageError(Exception):
    pass


@dataclass
class CliInvocation:
    mode: Mode
    image: str = None
    modes: tuple = ()  # dump modes in command-line order when several of -s/-i/-d are given
    target_path: str = None
    output: str = None
    pos: int = None
    bytes: int = None
    localtime: bool = False


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)

    def exit(self, status=0, message=None):
        raise UsageError(message or "")


def _int(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number: {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"negative value: {text!r}")
    return value


def _dump_parser():
    p = _Parser(prog="sqfs", add_help=False)
    p.add_argument("-h", "--help", action="store_true")
    p.add_argument("-s", dest="modes", action="append_const", const=Mode.DUMP_SUPER)
    p.add_argument("-i", dest="modes", action="append_const", const=Mode.DUMP_INODES)
    p.add_argument("-d", dest="modes", action="append_const", const=Mode.DUMP_DIRS)
    p.add_argument("-e", dest="modes", action="append_const", const=Mode.EXTRACT)
    p.add_argument("--localtime", action="store_true")
    p.add_argument("image", nargs="?")
    p.add_argument("path", nargs="?")
    return p


def _ls_parser():
    p = _Parser(prog="sqfs ls", add_help=False)
    p.add_argument("image")
    p.add_argument("path", nargs="?", default="/")
    return p


def _load_parser():
    p = _Parser(prog="sqfs load", add_help=False)
    p.add_argument("image")
    p.add_argument("path")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--bytes", dest="nbytes", type=_int)
    p.add_argument("--pos", type=_int)
    p.add_argument("extra", nargs="*", type=_int, help="positional bytes [pos]")
    return p


def parse_args(argv):
    argv = list(argv)
    if argv and argv[0] == "ls":
        ns = _ls_parser().parse_args(argv[1:])
        return CliInvocation(Mode.LS, ns.image, target_path=ns.path)
    if argv and argv[0] == "load":
        ns = _load_parser().parse_intermixed_args(argv[1:])
        nbytes, pos = ns.nbytes, ns.pos
        if len(ns.extra) > 2:
            raise UsageError("load takes at most two trailing numbers: bytes [pos]")
        if ns.extra:
            if nbytes is not None or pos is not None:
                raise UsageError("give bytes/pos either positionally or as options, not both")
            nbytes = ns.extra[0]
            pos = ns.extra[1] if len(ns.extra) > 1 else None
        if pos is not None and nbytes is None:
            raise UsageError("'pos' requires 'bytes'")
        return CliInvocation(Mode.LOAD, ns.image, target_path=ns.path, output=ns.output,
                             pos=pos, bytes=nbytes)

    ns = _dump_parser().parse_args(argv)
    if ns.help:
        return CliInvocation(Mode.HELP)
    modes = tuple(ns.modes or ())
    if not modes:
        raise UsageError("no action given")
    if ns.image is None:
        raise UsageError("missing <fs-image>")
    if Mode.EXTRACT in modes:
        if len(modes) > 1:
            raise UsageError("-e cannot be combined with other dumps")
        if ns.path is None:
            raise UsageError("-e needs a path inside the image")
        return CliInvocation(Mode.EXTRACT, ns.image, modes, target_path=ns.path,
                             localtime=ns.localtime)
    if ns.path is not None:
        raise UsageError(f"unexpected argument: {ns.path}")
    return CliInvocation(modes[0], ns.image, modes, localtime=ns.localtime)


def exit_code_for(exc):
    if isinstance(exc, (BadMagic, UnsupportedCompression, ImageOpenError)):
        return EXIT_PROBE
    if isinstance(exc, (NotFound, LookupFailed)):
        return EXIT_NOT_FOUND
    if isinstance(exc, OutOfBounds):
        # a pos past end of file is a bad request, not a broken image
        return EXIT_USAGE
    if isinstance(exc, CorruptImage):
        return EXIT_CORRUPT
    return EXIT_CORRUPT


def _dispatch(ctx, inv, out):
    if inv.mode is Mode.EXTRACT:
        report = dump.dump_entry(ctx, inv.target_path)
        if report.data is not None:
            out.flush()
            buf = getattr(out, "buffer", None)
            if buf is not None:
                buf.write(report.data)
                buf.flush()
            else:
                out.write(report.text)
        else:
            out.write(report.text)
        return
    if inv.mode is Mode.LS:
        out.write(ctx.ls(inv.target_path).render())
        return
    if inv.mode is Mode.LOAD:
        start = inv.pos or 0
        length = inv.bytes or None  # 0 means to end of file
        data = ctx.read_file(inv.target_path, start, length)
        with open(inv.output, "wb") as f:
            f.write(data)
        out.write(f"{len(data)} bytes read\n")
        return
    for mode in inv.modes:
        if mode is Mode.DUMP_SUPER:
            out.write(dump.dump_superblock(ctx, inv.localtime).text)
        elif mode is Mode.DUMP_INODES:
            out.write(dump.dump_inode_table(ctx, inv.localtime).text)
        elif mode is Mode.DUMP_DIRS:
            out.write(dump.dump_directory_table(ctx).text)


def run(inv, out=None, err=None, mount_fn=mount):
    """Execute a parsed invocation; returns the process exit status."""
    out = out or sys.stdout
    err = err or sys.stderr
    if inv.mode is Mode.HELP:
        out.write(USAGE)
        return EXIT_OK
    try:
        ctx = mount_fn(inv.image)
    except SquashfsError as e:
        err.write(f"sqfs: {inv.image}: {e}\n")
        return EXIT_PROBE
    try:
        _dispatch(ctx, inv, out)
        status = EXIT_OK
    except SquashfsError as e:
        err.write(f"sqfs: {e}\n")
        status = exit_code_for(e)
    except OSError as e:
        err.write(f"sqfs: {e}\n")
        status = EXIT_USAGE
    finally:
        ctx.close()
    return status


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        inv = parse_args(argv)
    except UsageError as e:
        msg = str(e).strip()
        if msg:
            sys.stderr.write(f"sqfs: {msg}\n")
        sys.stderr.write(USAGE.split("\n\n")[0] + "\n")
        return EXIT_USAGE
    return run(inv)


if __name__ == "__main__":
    sys.exit(main())

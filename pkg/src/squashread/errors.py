"""Exception hierarchy shared by every layer of the reader."""


class SquashfsError(Exception):
    """Base class for all errors raised by squashread."""


# storage

class ImageOpenError(SquashfsError):
    pass


class NotFound(SquashfsError, FileNotFoundError):
    pass


class ImageNotFound(ImageOpenError, NotFound):
    pass


class PermissionDenied(ImageOpenError, PermissionError):
    pass


class EmptyFile(ImageOpenError):
    pass


class OutOfBounds(SquashfsError):
    pass


# anything that means "the bytes on disk do not describe a valid image"

class CorruptImage(SquashfsError):
    pass


class BadMagic(CorruptImage):
    pass


class UnsupportedVersion(CorruptImage):
    pass


class CorruptSuperblock(CorruptImage):
    pass


class InvalidRef(CorruptImage):
    pass


class UnknownInodeType(CorruptImage):
    pass


class TruncatedInode(CorruptImage):
    pass


class BadBlockList(CorruptImage):
    pass


class TruncatedHeader(CorruptImage):
    pass


class TruncatedEntry(CorruptImage):
    pass


class InvalidName(CorruptImage):
    pass


class EmptyName(InvalidName):
    pass


class CorruptStream(CorruptImage):
    pass


class OutputOverflow(CorruptStream):
    pass


class TruncatedBlock(CorruptImage):
    pass


class OversizeBlock(CorruptImage):
    pass


class TruncatedTable(CorruptImage):
    pass


class IndexOutOfRange(CorruptImage):
    pass


class FragmentIndexOutOfRange(IndexOutOfRange):
    pass


class CorruptDirectory(CorruptImage):
    pass


class UnsupportedCompression(SquashfsError):
    def __init__(self, name, comp_id=None):
        super().__init__(f"unsupported compression: {name}")
        self.name = name
        self.comp_id = comp_id


# path lookups

class LookupFailed(SquashfsError):
    pass


class NotADirectory(LookupFailed, NotADirectoryError):
    pass


class IsADirectory(LookupFailed, IsADirectoryError):
    pass


class SymlinkLoop(LookupFailed):
    pass


class PathNotFound(LookupFailed, NotFound):
    pass


# lifecycle

class ContextClosed(SquashfsError):
    pass


class ContextBusy(SquashfsError):
    pass


class StreamClosed(SquashfsError):
    pass

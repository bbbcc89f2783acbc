"""Random-access byte sources over a filesystem image."""

import os
import stat

from .errors import EmptyFile, ImageNotFound, ImageOpenError, OutOfBounds, PermissionDenied


class BlockSource:
    """Immutable, bounds-checked view of an image.

    Subclasses provide ``_pread``; everything above this layer goes
    through :meth:`read_at`.
    """

    def __init__(self, total_size, identity):
        self._total_size = total_size
        self._identity = identity

    @property
    def total_size(self):
        return self._total_size

    @property
    def identity(self):
        return self._identity

    def read_at(self, offset, length):
        if offset < 0 or length < 0:
            raise OutOfBounds(f"negative read ({offset}, {length}) on {self._identity}")
        if offset + length > self._total_size:
            raise OutOfBounds(
                f"read of {length} bytes at {offset} exceeds {self._identity} "
                f"({self._total_size} bytes)"
            )
        if length == 0:
            return b""
        data = self._pread(offset, length)
        if len(data) != length:
            # file shrank underneath us
            raise OutOfBounds(f"short read at {offset} on {self._identity}")
        return data

    def _pread(self, offset, length):
        raise NotImplementedError

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __repr__(self):
        return f"<{type(self).__name__} {self._identity!r} size={self._total_size}>"


class FileSource(BlockSource):
    """Image backed by a regular file (or anything openable as one)."""

    def __init__(self, path):
        path = os.fspath(path)
        try:
            fd = os.open(path, os.O_RDONLY)
        except FileNotFoundError as e:
            raise ImageNotFound(f"{path}: no such file") from e
        except PermissionError as e:
            raise PermissionDenied(f"{path}: permission denied") from e
        except OSError as e:
            raise ImageOpenError(f"{path}: {e.strerror}") from e
        try:
            st = os.fstat(fd)
            if stat.S_ISDIR(st.st_mode):
                raise ImageOpenError(f"{path}: is a directory")
            size = st.st_size
            if not stat.S_ISREG(st.st_mode):
                size = os.lseek(fd, 0, os.SEEK_END)
            if size == 0:
                raise EmptyFile(f"{path}: empty file cannot hold a superblock")
        except BaseException:
            os.close(fd)
            raise
        super().__init__(size, path)
        self._fd = fd

    def _pread(self, offset, length):
        if self._fd is None:
            raise ValueError(f"{self._identity} is closed")
        # pread keeps no shared file position, so concurrent readers are fine
        return os.pread(self._fd, length, offset)

    def close(self):
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None


class MemorySource(BlockSource):
    """Image held in memory; used for tests and in-process fixtures."""

    def __init__(self, data, identity="<memory>"):
        data = bytes(data)
        if not data:
            raise EmptyFile(f"{identity}: empty buffer cannot hold a superblock")
        super().__init__(len(data), identity)
        self._data = data

    def _pread(self, offset, length):
        return self._data[offset:offset + length]


def open_image(path):
    return FileSource(path)

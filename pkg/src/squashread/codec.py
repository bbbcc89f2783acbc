"""Buffer-to-buffer decompression keyed by the superblock compression id."""

import enum
import zlib

from .errors import CorruptStream, OutputOverflow, UnsupportedCompression


class CompressionId(enum.IntEnum):
    ZLIB = 1
    LZMA = 2
    LZO = 3
    XZ = 4
    LZ4 = 5
    ZSTD = 6

    @property
    def label(self):
        return self.name.lower()


# mksquashfs calls the zlib codec "gzip"
GZIP = CompressionId.ZLIB

SUPPORTED = frozenset({CompressionId.ZLIB})


def compression_name(comp_id):
    try:
        return CompressionId(comp_id).name
    except ValueError:
        return f"UNKNOWN({comp_id})"


def check_supported(comp_id):
    try:
        cid = CompressionId(comp_id)
    except ValueError:
        raise UnsupportedCompression(f"unknown id {comp_id}", comp_id) from None
    if cid not in SUPPORTED:
        raise UnsupportedCompression(cid.label, comp_id)
    return cid


def _inflate(data, max_output):
    d = zlib.decompressobj()
    try:
        out = d.decompress(data, max_output)
        # a stream filling max_output exactly can still have its end marker
        # pending; only real extra output is an overflow
        tail = d.unconsumed_tail
        while tail and not d.eof:
            if d.decompress(tail, 1):
                raise OutputOverflow(f"inflated data exceeds {max_output} bytes")
            if len(d.unconsumed_tail) >= len(tail):
                break
            tail = d.unconsumed_tail
    except zlib.error as e:
        raise CorruptStream(f"zlib: {e}") from e
    if not d.eof:
        try:
            # truncated streams show up here rather than in decompress()
            rest = d.flush()
        except zlib.error as e:
            raise CorruptStream(f"zlib: {e}") from e
        if rest or not d.eof:
            raise CorruptStream("zlib stream ends before its end marker")
    return out


def decompress(comp_id, data, max_output):
    """Inflate one compressed block; the result never exceeds ``max_output`` bytes."""
    cid = check_supported(comp_id)
    if max_output <= 0:
        raise ValueError("max_output must be positive")
    if not data:
        raise CorruptStream("empty compressed block")
    if cid is CompressionId.ZLIB:
        return _inflate(bytes(data), max_output)
    raise UnsupportedCompression(cid.label, comp_id)

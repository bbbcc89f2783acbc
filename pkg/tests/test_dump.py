import os
import re

import pytest

from conftest import build, image_bytes, sb_field
from squashread import dump, vfs
from squashread.errors import IsADirectory, NotADirectory, PathNotFound


def test_superblock_fields_match_image_bytes(ctx, sample_image):
    text = dump.dump_superblock(ctx).text
    raw = image_bytes(sample_image[0])
    lines = dict(line.split(": ", 1) for line in text.splitlines() if ": " in line)
    assert lines["Magic number"] == "sqsh"
    assert lines["Number of inodes"] == str(sb_field(raw, "inode_count"))
    assert lines["Bytes used"] == str(sb_field(raw, "bytes_used"))
    assert int(lines["Inode table start"], 16) == sb_field(raw, "inode_start")
    assert int(lines["Directory table start"], 16) == sb_field(raw, "dir_start")
    assert int(lines["Fragment table start"], 16) == sb_field(raw, "frag_start")
    assert int(lines["Id table start"], 16) == sb_field(raw, "id_start")
    assert lines["Block size"] == "131072 bytes (128 KiB)"
    assert lines["Compression type"] == "ZLIB"
    assert lines["(xattr) Id table start"] == "0xffffffffffffffff"
    assert text.startswith("--- SUPER BLOCK INFORMATION ---\n")
    assert text.endswith("--- SUPER BLOCK FLAGS ---\nDuplicates\nExportable\n")


def test_creation_date_utc(ctx):
    # -mkfs-time 1596555974 in the fixture
    assert "Filesystem creation date: Tue 2020-08-04 15:46:14 UTC" in dump.dump_superblock(ctx).text


@pytest.mark.parametrize("n, text", [
    (4096, "4096 bytes (4 KiB)"), (1 << 20, "1048576 bytes (1 MiB)"), (131072, "131072 bytes (128 KiB)"),
])
def test_block_size_format(n, text):
    assert dump.format_block_size(n) == text


def test_inode_table_sections(ctx):
    text = dump.dump_inode_table(ctx).text
    headers = re.findall(r"\{Inode (\d+)/(\d+)\}", text)
    assert headers == [(str(i), "4") for i in range(1, 5)]
    blocks = text.split("{Inode ")[1:]
    assert "Inode type: Basic Directory" in blocks[0] and "File size: 3" in blocks[0]
    assert "(Uncompressed) File size: 12" in blocks[1]
    assert "Target path: file.txt" in blocks[2] and "Symlink size: 8" in blocks[2]
    assert "Parent inode number: 5" in blocks[3]
    assert text.startswith("--- --- ---\n{Inode 1/4}\n--- --- ---\nPermissions: ")


def test_directory_table_layout(ctx):
    assert dump.dump_directory_table(ctx).text == (
        "Directory 1\nName: dir_example\nEmpty directory.\n\n"
        "Root directory\n1) dir_example\n2) file.txt\n3) slink\n\n"
    )


def test_directory_table_order(tmp_path):
    def nested(root):
        os.makedirs(os.path.join(root, "a", "b", "c"))

    image, _ = build(tmp_path, nested)
    with vfs.mount(image) as c:
        text = dump.dump_directory_table(c).text
    names = re.findall(r"Name: (\w+)", text)
    assert sorted(names) == ["a", "b", "c"]
    assert text.index("Root directory") > text.index("Name: a")


def test_empty_root(tmp_path):
    image, _ = build(tmp_path, lambda root: None)
    with vfs.mount(image) as c:
        assert dump.dump_directory_table(c).text == "Root directory\n\n"
        assert c.sb.inode_count == 1


def test_dump_entry(ctx):
    assert dump.dump_entry(ctx, "/file.txt").data == b"Hello world\n"
    assert dump.dump_entry(ctx, "/slink").data == b"Hello world\n"
    assert dump.dump_entry(ctx, "/dir_example/").text == "Empty directory.\n"
    assert dump.dump_entry(ctx, "/").text == "1) dir_example\n2) file.txt\n3) slink\n"
    with pytest.raises(IsADirectory):
        dump.dump_entry(ctx, "/dir_example")
    with pytest.raises(NotADirectory):
        dump.dump_entry(ctx, "/file.txt/")
    with pytest.raises(PathNotFound):
        dump.dump_entry(ctx, "/nope")

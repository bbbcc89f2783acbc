"""Deterministic source trees for building test images."""

import os
import random
from dataclasses import dataclass, field

DEFAULT_BLOCK_SIZE = 131072


@dataclass(frozen=True)
class SizePlan:
    """How many files of each storage class to generate."""
    data_only: int = 0      # exact multiples of the block size
    fragment_only: int = 0  # shorter than one block
    mixed: int = 0          # whole blocks plus a tail
    sparse: int = 0         # contain all-zero blocks
    zero_length: int = 0

    @property
    def total(self):
        return self.data_only + self.fragment_only + self.mixed + self.sparse + self.zero_length


@dataclass(frozen=True)
class SymlinkPlan:
    valid: int = 0
    dangling: int = 0
    loop: int = 0  # each loop is a pair of links pointing at each other


@dataclass(frozen=True)
class CorpusSpec:
    seed: int
    depth: int = 3
    fanout: int = 3
    sizes: SizePlan = field(default_factory=SizePlan)
    symlinks: SymlinkPlan = field(default_factory=SymlinkPlan)
    block_size: int = DEFAULT_BLOCK_SIZE
    max_blocks: int = 4  # upper bound on whole blocks per data/mixed/sparse file
    empty_dirs: int = 1


@dataclass
class Tree:
    """What was written: paths are image-absolute ("/a/b")."""
    root: str
    files: dict = field(default_factory=dict)     # path -> storage class
    symlinks: dict = field(default_factory=dict)  # path -> (target, kind)
    dirs: list = field(default_factory=list)

    def host_path(self, image_path):
        return os.path.join(self.root, image_path.lstrip("/"))


def seeded_corpus(seed, block_size=DEFAULT_BLOCK_SIZE):
    """A mixed corpus under 100 files and a few MiB, varied by seed."""
    rng = random.Random(seed)
    return CorpusSpec(
        seed=seed,
        depth=rng.randint(2, 4),
        fanout=rng.randint(2, 4),
        sizes=SizePlan(
            data_only=rng.randint(2, 6),
            fragment_only=rng.randint(20, 50),
            mixed=rng.randint(3, 8),
            sparse=rng.randint(1, 3),
            zero_length=rng.randint(1, 3),
        ),
        symlinks=SymlinkPlan(valid=rng.randint(1, 4), dangling=1, loop=1),
        block_size=block_size,
        max_blocks=3,
    )


def _content(rng, size):
    # half compressible text, half random bytes, so both stored forms occur
    if rng.random() < 0.5:
        return rng.randbytes(size)
    words = [b"squash", b"block", b"inode", b"fragment", b"table", b"\n"]
    out = bytearray()
    while len(out) < size:
        out += rng.choice(words) + b" "
    return bytes(out[:size])


def _sparse_content(rng, nblocks, bs):
    blocks = []
    for i in range(nblocks):
        if i % 2 == 0:
            blocks.append(bytes(bs))
        else:
            blocks.append(_content(rng, bs))
    tail = _content(rng, rng.randint(1, bs - 1))
    return b"".join(blocks) + tail


def _sizes(spec, rng):
    bs = spec.block_size
    plan = []
    for _ in range(spec.sizes.data_only):
        plan.append(("data_only", bs * rng.randint(1, spec.max_blocks)))
    for _ in range(spec.sizes.fragment_only):
        plan.append(("fragment_only", rng.randint(1, bs - 1)))
    for _ in range(spec.sizes.mixed):
        plan.append(("mixed", bs * rng.randint(1, spec.max_blocks) + rng.randint(1, bs - 1)))
    for _ in range(spec.sizes.sparse):
        plan.append(("sparse", None))
    for _ in range(spec.sizes.zero_length):
        plan.append(("zero_length", 0))
    rng.shuffle(plan)
    return plan


def _dir_paths(spec, rng):
    dirs = [""]
    frontier = [""]
    for level in range(spec.depth):
        nxt = []
        for parent in frontier:
            for i in range(rng.randint(1, spec.fanout)):
                path = f"{parent}/d{level}_{i}"
                dirs.append(path)
                nxt.append(path)
        frontier = nxt
    return dirs


def generate_tree(spec, root):
    """Populate ``root`` (which must exist and be empty) from ``spec``."""
    rng = random.Random(spec.seed)
    tree = Tree(root)
    dirs = _dir_paths(spec, rng)
    for d in dirs[1:]:
        os.makedirs(tree.host_path(d))
    tree.dirs = dirs[1:]
    for i in range(spec.empty_dirs):
        path = f"{rng.choice(dirs)}/empty{i}"
        os.makedirs(tree.host_path(path))
        tree.dirs.append(path)

    for i, (kind, size) in enumerate(_sizes(spec, rng)):
        path = f"{rng.choice(dirs)}/f{i:03d}.bin"
        if kind == "sparse":
            data = _sparse_content(rng, rng.randint(2, spec.max_blocks + 1), spec.block_size)
        else:
            data = _content(rng, size)
        with open(tree.host_path(path), "wb") as f:
            f.write(data)
        tree.files[path] = kind

    regular = sorted(tree.files)
    for i in range(spec.symlinks.valid):
        if not regular:
            break
        path = f"{rng.choice(dirs)}/link{i}"
        target = rng.choice(regular)  # absolute targets resolve from the image root
        os.symlink(target, tree.host_path(path))
        tree.symlinks[path] = (target, "valid")
    for i in range(spec.symlinks.dangling):
        path = f"{rng.choice(dirs)}/dangling{i}"
        os.symlink(f"missing{i}", tree.host_path(path))
        tree.symlinks[path] = (f"missing{i}", "dangling")
    for i in range(spec.symlinks.loop):
        d = rng.choice(dirs)
        a, b = f"loop{i}a", f"loop{i}b"
        os.symlink(b, tree.host_path(f"{d}/{a}"))
        os.symlink(a, tree.host_path(f"{d}/{b}"))
        tree.symlinks[f"{d}/{a}"] = (b, "loop")
        tree.symlinks[f"{d}/{b}"] = (a, "loop")
    return tree


def sample_tree(root):
    """An empty directory, a 12-byte text file and a relative symlink to it."""
    tree = Tree(root)
    os.mkdir(os.path.join(root, "dir_example"))
    with open(os.path.join(root, "file.txt"), "wb") as f:
        f.write(b"Hello world\n")
    os.symlink("file.txt", os.path.join(root, "slink"))
    tree.dirs = ["/dir_example"]
    tree.files = {"/file.txt": "fragment_only"}
    tree.symlinks = {"/slink": ("file.txt", "valid")}
    return tree


THREE_FILE_NAMES = ("two_blocks.bin", "half_block.bin", "two_and_a_half_blocks.bin")


def three_file_tree(root, block_size=DEFAULT_BLOCK_SIZE, seed=0):
    """Files of 2, 0.5 and 2.5 blocks: data-only, fragment-only and mixed storage."""
    rng = random.Random(seed)
    tree = Tree(root)
    sizes = (2 * block_size, block_size // 2, 5 * block_size // 2)
    kinds = ("data_only", "fragment_only", "mixed")
    for name, size, kind in zip(THREE_FILE_NAMES, sizes, kinds):
        with open(os.path.join(root, name), "wb") as f:
            f.write(rng.randbytes(size))
        tree.files["/" + name] = kind
    return tree


def host_bytes(tree):
    return sum(os.path.getsize(tree.host_path(p)) for p in tree.files)

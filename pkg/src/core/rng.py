"""
Keyed counter-based random streams.

一个 master seed 通过 SHA-256(master, tag, ...) 派生出各子系统的 Philox key，
不依赖任何全局随机状态；同一个 key 在任何线程、任何执行顺序下都产生同一串随机数。
"""
import hashlib

import numpy as np


def derive_key(master_seed, *tags):
    """128-bit Philox key for (master_seed, *tags)."""
    text = "|".join([str(int(master_seed))] + [str(t) for t in tags])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


def derive_seed(master_seed, *tags):
    """32-bit integer seed, for libraries that only take plain ints."""
    return derive_key(master_seed, *tags) & 0xFFFFFFFF


class StreamKey:
    """Immutable address of a random stream: master seed plus a tag path."""

    def __init__(self, master_seed, *tags):
        self.master_seed = int(master_seed)
        self.tags = tuple(tags)

    def child(self, *tags):
        return StreamKey(self.master_seed, *(self.tags + tuple(tags)))

    def generator(self):
        return np.random.Generator(np.random.Philox(key=derive_key(self.master_seed, *self.tags)))

    def __eq__(self, other):
        return isinstance(other, StreamKey) and (self.master_seed, self.tags) == (other.master_seed, other.tags)

    def __hash__(self):
        return hash((self.master_seed, self.tags))

    def __repr__(self):
        return f"StreamKey({self.master_seed}, {', '.join(repr(t) for t in self.tags)})"


def keyed_rng(master_seed, *tags):
    return StreamKey(master_seed, *tags).generator()


def keyed_normals(master_seed, tag, epoch, indices, k_samples, dim):
    """
    Standard normal draws of shape (len(indices), k_samples, dim).
    Row i comes from the stream keyed by (master_seed, tag, epoch, indices[i]);
    the sample index is the position inside that stream.
    """
    out = np.empty((len(indices), k_samples, dim), dtype=np.float64)
    for row, idx in enumerate(indices):
        out[row] = keyed_rng(master_seed, tag, epoch, int(idx)).standard_normal((k_samples, dim))
    return out

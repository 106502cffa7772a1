"""Seed derivation for reproducible, independent random streams.

Every stream is keyed by ``(master_seed, purpose_tag, *indices)``.  The tag is
hashed with CRC32 so the mapping is stable across Python processes (``hash()``
is salted), and the tuple is fed to :class:`numpy.random.SeedSequence` as its
spawn key.  Two streams with different keys are statistically independent, and
the same key always reproduces the same stream, regardless of the order in
which streams are created.  This is what lets a parallel batch match a serial
one bit for bit.
"""
from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1

# purpose tags used across the package
ENV = "env"
STRATEGY = "strategy"
PREINFO = "preinfo"
EPISODE = "episode"
TRAIN = "train"
TRAJ = "trajectory"
INIT = "init"


def tag_id(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def seed_sequence(seed: int, tag: str, *index: int) -> np.random.SeedSequence:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    key = (tag_id(tag),) + tuple(int(i) for i in index)
    return np.random.SeedSequence(int(seed) & MASK64, spawn_key=key)


def stream(seed: int, tag: str, *index: int) -> np.random.Generator:
    """Independent generator for ``(seed, tag, *index)``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, tag, *index)))


def derive_seed(seed: int, tag: str, *index: int) -> int:
    """A 64-bit child seed, for handing to code that wants a plain integer."""
    word = seed_sequence(seed, tag, *index).generate_state(2, dtype=np.uint32)
    return int(word[0]) | (int(word[1]) << 32)

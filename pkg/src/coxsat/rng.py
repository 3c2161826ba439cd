"""Counter-based random streams keyed by (master seed, block index, stream tag)."""

from __future__ import annotations

import zlib

import numpy as np

TAGS = ("constellation", "observer", "fading", "orbits", "fit")


def tag_id(tag):
    return zlib.crc32(tag.encode("ascii")) & 0xFFFFFFFF


def stream(seed, block=0, tag="constellation"):
    """Independent Philox generator for one block of work.

    Streams depend only on their key, never on the order in which blocks are
    executed, so results do not change with the worker count.
    """
    if seed < 0 or seed >= 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=(tag_id(tag), int(block)))
    return np.random.Generator(np.random.Philox(ss))

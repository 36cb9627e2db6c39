"""Named, reproducible random streams derived from a single integer seed."""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, *names: str | int) -> np.random.Generator:
    """Generator for the sub-stream ``seed / names[0] / names[1] / ...``.

    Different name paths give statistically independent streams; the same
    path always gives the same stream.
    """
    key = tuple(zlib.crc32(str(name).encode()) for name in names)
    return np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=key))

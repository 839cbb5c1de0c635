"""Labeled, counter-based random streams derived from one top-level seed."""
import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed: int, label: str) -> np.random.Generator:
    """Independent Philox generator for ``label`` (e.g. "init", "shuffle").

    The Philox key packs the 64-bit seed with a CRC of the label, so each
    component's randomness is reproducible on its own.
    """
    key = (int(seed) & _MASK64) | (zlib.crc32(label.encode()) << 64)
    return np.random.Generator(np.random.Philox(key=key))

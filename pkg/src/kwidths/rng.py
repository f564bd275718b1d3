"""Named, counter-based random streams derived from a single integer seed."""
import zlib

import numpy as np


def stream(seed, name, index=0):
    """Philox generator for substream ``name`` (and optional integer ``index``).

    The same (seed, name, index) triple always yields the same stream, and
    distinct names give statistically independent streams.
    """
    key = (zlib.crc32(name.encode("utf-8")), int(index))
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))

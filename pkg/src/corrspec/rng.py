"""Counter-based random substreams.

Every random draw in the package comes from a Philox generator keyed by
``(seed, module tag, *indices)``, so a probe, fringe point or shot gets the
same numbers no matter which worker process evaluates it or in what order.
"""

from __future__ import annotations

import zlib

import numpy as np

SEED_MAX = 2**64 - 1


def _tag(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def check_seed(seed) -> int:
    if seed is None:
        raise ValueError("a seed is required; there is no wall-clock default")
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def substream(seed: int, module: str, *indices: int) -> np.random.Generator:
    """Independent generator for one (module, indices) cell of a run."""
    key = (_tag(module),) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))

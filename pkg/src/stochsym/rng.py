"""Deterministic counter-based random streams.

Philox keyed by (master seed, leg id) with the path index placed in the
counter block gives every simulated path its own substream.  Draws then
depend only on (seed, leg, path), never on chunking, scheduling or thread
count, which is what makes reports byte-identical across STOCHSYM_THREADS
settings.
"""

from __future__ import annotations

import numpy as np

LEG_CHECKS = 0
LEG_DIRECT = 1
LEG_REDUCED = 2
LEG_AUX = 3


def substream(master_seed: int, leg: int, path_index: int) -> np.random.Generator:
    """Independent generator for one path of one experiment leg."""
    key = np.array([int(master_seed) % (1 << 64), int(leg) % (1 << 64)],
                   dtype=np.uint64)
    counter = np.array([0, 0, int(path_index) % (1 << 64), 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def sample_box(low, high, count: int, seed: int, leg: int = LEG_CHECKS) -> np.ndarray:
    """Uniform points in an axis-aligned box, shape (count, n)."""
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    g = substream(seed, leg, 0)
    return low + (high - low) * g.random((count, low.size))

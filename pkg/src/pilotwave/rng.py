"""Counter-based random substreams, one per pair index.

Stream ``i`` is Philox keyed by the master seed with its 256-bit counter
starting at ``i << 128``: streams never overlap for fewer than 2**128 blocks
each, and a pair's draws do not depend on how pairs are scheduled.
"""

from __future__ import annotations

import numpy as np

_SEED_MASK = (1 << 64) - 1


def master_key(master_seed: int) -> np.ndarray:
    if not 0 <= master_seed <= _SEED_MASK:
        raise ValueError(f"master_seed must fit in 64 unsigned bits, got {master_seed}")
    return np.random.SeedSequence(master_seed).generate_state(2, np.uint64)


def pair_stream(master_seed: int, pair_index: int, key: np.ndarray | None = None) -> np.random.Generator:
    if key is None:
        key = master_key(master_seed)
    counter = np.array([0, 0, pair_index, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))

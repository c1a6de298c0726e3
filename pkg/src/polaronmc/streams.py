"""Counter-based random number streams for reproducible parallel runs.

A root seed plus a tuple of integer keys determines a stream.  Logical
tasks (pool chunk 17, path replica 3, ...) always map to the same stream
regardless of how many workers execute them, so results are independent
of the degree of parallelism.
"""

from __future__ import annotations

import numpy as np

# Fixed task-kind identifiers; never renumber, only append.
KIND_POOL = 1
KIND_PATHS = 2
KIND_CYCLES = 3
KIND_GAUSS = 4
KIND_MISC = 5


def substream(root_seed: int, *key: int) -> np.random.Generator:
    """Derive an independent generator from (root_seed, key...)."""
    ss = np.random.SeedSequence(entropy=int(root_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def chunk_streams(root_seed: int, kind: int, n_chunks: int) -> list[np.random.Generator]:
    """Streams for a fixed-size chunked task, one per chunk, in chunk order."""
    return [substream(root_seed, kind, i) for i in range(n_chunks)]

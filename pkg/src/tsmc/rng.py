"""Deterministic random substreams.

Every stochastic decision draws from a generator keyed by
``(master seed, stream, level, particle)``, so results do not depend on how
particles are split across workers.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

INIT = 0
RESAMPLE = 1
MOVE = 2
REFRESH = 3
MPPI = 4
BATCH = 5


def substream(seed: int, *key: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))


def particle_streams(seed: int, prefix: Sequence[int], rows: Sequence[int] | range) -> list[np.random.Generator]:
    """One generator per row index, keyed by ``(*prefix, row)``."""
    return [substream(seed, *prefix, i) for i in rows]


def as_row_rngs(rng, n: int) -> list[np.random.Generator]:
    """Normalise ``rng`` to one generator per row.

    A single generator is shared by all rows and consumed in row order.
    """
    if isinstance(rng, np.random.Generator):
        return [rng] * n
    rngs = list(rng)
    if len(rngs) != n:
        raise ValueError(f"expected {n} generators, got {len(rngs)}")
    return rngs

"""Counter-derived RNG streams.

Every stochastic component draws from a stream keyed by (master_seed,
purpose tag, counters...). Results are therefore independent of worker
count and scheduling: an evaluation's randomness depends only on its
logical index, never on which thread ran it.
"""

from __future__ import annotations

import numpy as np

# purpose tags (first key after the master seed)
PHASE1 = 1
POLICY_OPT = 2
CMA_OPT = 3
EVAL = 4
TERRAIN = 5
INIT = 6


def seed_sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    if master_seed < 0 or any(k < 0 for k in key):
        raise ValueError("seed keys must be non-negative")
    return np.random.SeedSequence([int(master_seed), *[int(k) for k in key]])


def make_rng(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(master_seed, *key))


def derive_seed(master_seed: int, *key: int) -> int:
    """Collapse a key path to a single int seed (loggable, re-usable)."""
    state = seed_sequence(master_seed, *key).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])

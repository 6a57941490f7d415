"""Named, order-independent random streams derived from one experiment seed."""

from __future__ import annotations

import numpy as np

# stream tags
DATA = 1
SPLIT = 2
PARTITION = 3
INIT = 4
SAMPLING = 5
BATCHES = 6


def stream_seed(seed: int, *keys: int) -> int:
    """A 64-bit seed that depends only on ``seed`` and ``keys``."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, np.uint64)[0])


def rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(stream_seed(seed, *keys))

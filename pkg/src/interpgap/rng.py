"""Counter-based per-trial random substreams.

Each trial draws from a Philox generator keyed by ``(seed, trial, *keys)``,
so the stream a trial sees does not depend on how many trials run, in what
order, or on how many workers execute them.
"""

import numpy as np


def substream(seed: int, trial: int = 0, *keys: int) -> np.random.Generator:
    """Return the generator owned by ``trial`` (and optional sub-keys) under ``seed``."""
    key = (int(trial),) + tuple(int(k) for k in keys)
    if seed < 0 or min(key) < 0:
        raise ValueError("seed and stream keys must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))

"""Seeded, splittable random streams.

Every stochastic component in the package draws from a Philox
(counter-based) stream derived from a user seed plus a structural path
such as (purpose, repeat index).  Distinct paths give independent
streams, so adding a consumer never perturbs the draws of another, and
identical seeds reproduce identical runs bit for bit.
"""

import numpy as np


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return a generator keyed by ``seed`` and a structural path."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))

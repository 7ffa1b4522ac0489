"""Deterministic random-stream derivation.

All stochastic code draws from substreams keyed by (master seed, integer
path), so results never depend on execution order or worker count.
"""

import numpy as np


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Return an independent generator for the given master seed and key path."""
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=key))

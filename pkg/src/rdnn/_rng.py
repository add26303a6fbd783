"""Seed plumbing. Every random draw in the package flows from one integer
seed through ``SeedSequence`` spawn keys, so streams never overlap."""

import numpy as np

DATA = 0
CONTAM = 1
INIT = 2
TRAIN = 3
FIT = 4


def stream(seed, *key):
    """Generator for the substream ``key`` under integer ``seed``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def derive_seed(seed, *key):
    """A fresh 63-bit integer seed derived from ``seed`` and ``key``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(2, dtype=np.uint32).astype(np.uint64) @ np.array([1 << 31, 1], dtype=np.uint64))

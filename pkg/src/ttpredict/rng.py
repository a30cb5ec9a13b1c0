"""Counter-based seed derivation.

Every random stream is a pure function of ``(master_seed, *path)``, so work
split across any number of workers reproduces the same numbers.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def stream(master_seed: int, *path) -> np.random.Generator:
    """Independent generator for the task identified by ``path``."""
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF, *(_key(p) for p in path)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)

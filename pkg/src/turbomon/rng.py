"""Seedable named random streams.

Every stochastic piece of the pipeline (weight init, epsilon sampling,
shuffling, synthetic data) pulls from its own named stream derived from one
master seed, so reordering one consumer never perturbs the others.
"""

import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    """Return a generator for the named substream of ``seed``.

    The same (seed, name) pair always yields an identical sequence.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))

"""Seeded random streams.

Every random draw in an experiment comes from a PCG64 generator whose SeedSequence entropy is
(seed, *keys), so any single trial can be reproduced from the run seed and its keys alone.
"""
import zlib

import numpy as np

DEFAULT_SEED = 2011


def _entropy_word(key) -> int:
    if isinstance(key, (int, np.integer)) and not isinstance(key, bool) and key >= 0:
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def trial_rng(seed: int, *keys) -> np.random.Generator:
    """Independent generator for the stream identified by (seed, *keys).

    :param seed: The run seed (non-negative, below 2**64)
    :param keys: Stream keys; non-negative ints are used as-is, anything else via its CRC32
    :return: A numpy Generator backed by PCG64
    """
    entropy = [int(seed)] + [_entropy_word(key) for key in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def sample_without_replacement(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Draw k distinct indices from range(n) with a partial Fisher-Yates shuffle."""
    if k < 0 or k > n:
        raise ValueError(f"Cannot draw {k} distinct indices from {n}")
    pool = np.arange(n, dtype=np.int64)
    for i in range(k):
        j = int(rng.integers(i, n))
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k].copy()

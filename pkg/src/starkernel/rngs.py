"""Seeded randomness.

All randomness in the package (weight init, data noise, shuffling, drop
path) flows through counter-based 64-bit Philox generators keyed by small
integer tuples, so every run is a pure function of its seed words and
reruns are bit-identical.
"""

from __future__ import annotations

import numpy as np


def make_rng(*key_words: int) -> np.random.Generator:
    """Philox generator keyed by up to two 64-bit words, e.g. (seed, epoch)."""
    if not key_words or len(key_words) > 2:
        raise ValueError("make_rng takes one or two key words")
    key = np.zeros(2, dtype=np.uint64)
    for i, word in enumerate(key_words):
        key[i] = np.uint64(word % (1 << 64))
    return np.random.Generator(np.random.Philox(key=key))

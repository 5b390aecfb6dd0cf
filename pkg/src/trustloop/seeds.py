"""Seed-stream derivation.

Every consumer of randomness (shuffling, corruption, weight init, shear
draws, random-baseline sampling) gets its own child seed derived from the
master seed plus a stream name, so changing how one consumer draws can
never perturb another.  Generators are explicit PCG64 instances, never the
process-global numpy state.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _token(part: int | str) -> int:
    if isinstance(part, str):
        return int.from_bytes(hashlib.blake2s(part.encode(), digest_size=8).digest(), "big")
    return int(part)


def derive_seed(root: int, *path: int | str) -> int:
    """Deterministic 64-bit child seed for a named substream of `root`."""
    entropy = [_token(root)] + [_token(p) for p in path]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def generator(seed: int) -> np.random.Generator:
    """Freshly seeded PCG64 generator; byte-deterministic across platforms."""
    return np.random.Generator(np.random.PCG64(seed))

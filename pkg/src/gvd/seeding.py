"""Deterministic seed derivation.

Every stochastic task draws its generator from
``derive_seed(master_seed, stage_tag, class_id, instance_index)``.  The mixing
function is SplitMix64 applied as a sponge: each input word is XORed into the
state and the state is passed through the SplitMix64 finalizer.  Stage tags
are hashed to a 64-bit word with FNV-1a.  Because seeds depend only on the
task coordinates, results do not depend on how tasks are scheduled.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & MASK64
    return h


def derive_seed(master_seed: int, stage_tag: str, class_id: int = 0, index: int = 0) -> int:
    """Mix the task coordinates into a single 64-bit seed."""
    state = splitmix64(master_seed & MASK64)
    for word in (fnv1a64(stage_tag), class_id & MASK64, index & MASK64):
        state = splitmix64(state ^ word)
    return state


def rng_for(master_seed: int, stage_tag: str, class_id: int = 0, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, stage_tag, class_id, index))

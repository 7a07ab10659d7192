"""Stable hashing and seed derivation.

Everything here must give the same answer on every platform and Python
version, so ``hash()`` and ambient entropy are never used.
"""
from __future__ import annotations

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def fmix64(h: int) -> int:
    """MurmurHash3 64-bit finalizer: spreads low-bit differences into the high bits."""
    h ^= h >> 33
    h = (h * 0xFF51AFD7ED558CCD) & _MASK64
    h ^= h >> 33
    h = (h * 0xC4CEB9FE1A85EC53) & _MASK64
    h ^= h >> 33
    return h


def derive_rng(seed: int, *names: str) -> np.random.Generator:
    """Generator seeded from ``seed`` plus stable hashes of ``names``.

    Used to fan one global seed out to components and documents, e.g.
    ``derive_rng(seed, "attack", doc_id)``.
    """
    entropy = [int(seed) & _MASK64] + [fnv1a64(n.encode("utf-8")) for n in names]
    return np.random.default_rng(np.random.SeedSequence(entropy))

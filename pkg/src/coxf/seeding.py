"""Deterministic seed derivation and sampling helpers.

One master seed is split into independent child streams by hashing the seed
together with integer key words (trial index, stage tag, worker id, ...).
SHA-256 keeps the derivation stable across platforms and Python versions,
which is what makes reruns byte-identical.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *key: int) -> int:
    """Derive a 64-bit child seed from ``seed`` and integer key words."""
    h = hashlib.sha256()
    h.update((int(seed) & _MASK64).to_bytes(8, "little"))
    for word in key:
        h.update((int(word) & _MASK64).to_bytes(8, "little"))
    return int.from_bytes(h.digest()[:8], "little")


def rng_from(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream named by (seed, key words)."""
    if key:
        return np.random.default_rng(derive_seed(seed, *key))
    return np.random.default_rng(int(seed) & _MASK64)


def sample_without_replacement(rng: np.random.Generator, n: int, k: int) -> list[int]:
    """Uniform k-subset of range(n), partial Fisher-Yates, returned sorted."""
    if not 0 <= k <= n:
        raise ValueError(f"cannot sample {k} items from {n}")
    pool = list(range(n))
    for i in range(k):
        j = int(rng.integers(i, n))
        pool[i], pool[j] = pool[j], pool[i]
    picked = pool[:k]
    picked.sort()
    return picked

"""Deterministic derivation of independent random streams.

All randomness in this package flows from explicit integer seeds. Nested or
parallel work derives child seeds as ``child_seed(parent, index)``; two
workers with different indices get statistically independent streams, and the
derivation is stable across platforms and runs.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["child_seed", "make_rng"]

_MASK64 = (1 << 64) - 1


def child_seed(parent_seed: int, index: int) -> int:
    """Derive an independent child seed as a keyed hash of (parent, index)."""
    h = hashlib.blake2b(digest_size=8)
    h.update((parent_seed & _MASK64).to_bytes(8, "little"))
    h.update((index & _MASK64).to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


def make_rng(seed: int) -> np.random.Generator:
    """A fresh generator for the given seed."""
    return np.random.default_rng(seed & _MASK64)

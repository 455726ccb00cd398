"""Deterministic seed derivation.

One scenario-level seed fans out into independent substreams keyed by a
purpose tag plus integer indices. Adding a new Monte Carlo consumer never
perturbs the draws seen by existing ones, and nothing depends on Python's
randomized string hashing.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK63 = (1 << 63) - 1


def derive_seed(root: int, purpose: str, *indices: int) -> int:
    """Stable 63-bit seed for one (root, purpose, indices) consumer."""
    key = f"{int(root)}|{purpose}|" + "|".join(str(int(i)) for i in indices)
    digest = hashlib.sha256(key.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big") & _MASK63


def substream(root: int, purpose: str, *indices: int) -> np.random.Generator:
    """Independent generator for one named consumer."""
    return np.random.default_rng(derive_seed(root, purpose, *indices))

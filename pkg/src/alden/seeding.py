"""Deterministic RNG derivation.

Every random draw in the package comes from a generator spawned off a root
seed plus a key path, e.g. ``rng(seed, "train", run, iteration)``.  Keys are
mixed into a ``numpy.random.SeedSequence`` so streams for different purposes
never overlap and adding a new consumer never perturbs existing streams.
String keys are hashed with crc32, which is stable across platforms and
Python versions (unlike ``hash``).
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"seed key must be int or str, got {type(key).__name__}")


def seed_sequence(*keys) -> np.random.SeedSequence:
    """Build a SeedSequence from a root seed and any number of sub-keys."""
    if not keys:
        raise ValueError("at least one seed key is required")
    return np.random.SeedSequence([_key_to_int(k) for k in keys])


def rng(*keys) -> np.random.Generator:
    """Return a Generator for the stream identified by the key path."""
    return np.random.default_rng(seed_sequence(*keys))

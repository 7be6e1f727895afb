"""Deterministic random number derivation.

Every stochastic choice in the package (shuffling, flip selection, dropout,
weight init, synthetic data) draws from a PCG64 generator keyed on
``(seed, purpose, *extra_keys)`` through numpy's SeedSequence. Replaying a
run with the same seed therefore reproduces every random decision exactly,
independent of call order across purposes.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_rng(seed: int, purpose: str, *keys: int) -> np.random.Generator:
    """Return a fresh PCG64 generator for one (seed, purpose, keys) context.

    ``purpose`` is a short string tag ("shuffle", "dropout", ...) hashed with
    CRC-32 so distinct purposes under the same seed give independent streams.
    Extra integer keys (epoch, step, record id) further split the stream.
    """
    entropy = [seed & _MASK64, zlib.crc32(purpose.encode("utf-8"))]
    entropy.extend(int(k) & _MASK64 for k in keys)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def coin(seed: int, purpose: str, *keys: int) -> float:
    """One uniform draw in [0, 1) from the derived stream. Used for
    per-record decisions such as flip-augmentation selection."""
    return float(derive_rng(seed, purpose, *keys).random())

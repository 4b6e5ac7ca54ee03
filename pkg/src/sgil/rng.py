"""Random stream derivation.

Every random draw comes from ``stream(seed, purpose, *index)``: a fresh
PCG64 generator seeded by the integer sequence
``[seed, crc32(purpose), *index]``.  Streams for different purposes or
indices are independent, and any draw can be replayed without replaying
the ones before it.
"""
from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, purpose: str, *index: int) -> np.random.Generator:
    key = [int(seed), zlib.crc32(purpose.encode("utf-8")), *(int(i) for i in index)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))

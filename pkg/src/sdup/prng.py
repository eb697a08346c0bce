"""Small integer mixers and generators used wherever determinism matters.

Everything here is bit-exact and platform independent; none of it is
cryptographically strong.
"""

from __future__ import annotations

import struct
from typing import Iterator

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
XORSHIFT_STAR = 0x2545F4914F6CDD1D


def splitmix64(z: int) -> int:
    """One SplitMix64 output for state ``z`` (state is advanced by the gamma first)."""
    z = (z + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix(*values: int) -> int:
    """Fold integers into one 64-bit value: h = splitmix64(h ^ v) for each v, h0 = 0."""
    h = 0
    for v in values:
        h = splitmix64(h ^ (v & MASK64))
    return h


def keyed_uniform(*values: int) -> float:
    """Deterministic float in [0, 1) from the top 53 bits of ``mix(*values)``."""
    return (mix(*values) >> 11) * (1.0 / (1 << 53))


def xorshift64star(seed: int) -> Iterator[int]:
    """Infinite xorshift64* word stream (shifts 12/25/27). A zero seed is replaced by the gamma."""
    x = seed & MASK64 or GOLDEN_GAMMA
    while True:
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        yield (x * XORSHIFT_STAR) & MASK64


def words_to_bytes(words: list[int]) -> bytes:
    return struct.pack(f">{len(words)}Q", *words)

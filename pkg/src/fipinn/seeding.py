"""Deterministic seed derivation from one master seed (splitmix64)."""

from __future__ import annotations

MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def derive_seed(master: int, *keys: int) -> int:
    """Mix ``master`` with integer ``keys`` (round index, purpose, ...) into a 63-bit seed."""
    s = splitmix64(int(master) & MASK)
    for k in keys:
        s = splitmix64(s ^ (int(k) & MASK))
    return s >> 1


# purpose tags for derive_seed
INIT, DATA, TRAIN, ESTIMATE, ENRICH, EVAL = range(6)

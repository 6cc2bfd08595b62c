"""Seed derivation and random streams.

Every random quantity in a run comes from one of a few named streams derived
from a single 64-bit master seed:

* ``hash64(*keys)`` is the first 8 bytes (little-endian) of BLAKE2b over the
  keys, each encoded as ``repr(key)`` and joined by ``0x1f``.
* ``stream(seed, tag)`` is a numpy ``Generator`` (PCG64) seeded with
  ``hash64(seed, tag)``. Sequential streams are used where the number of
  draws does not depend on pool state (arrivals, pair generation, betas).
* ``KeyedStream`` is counter-based: ``uniform(*keys)`` is a pure function of
  the stream seed and the keys. It backs draws that must agree across runs
  whose pools diverge, e.g. the crossmatch outcome of a given donor/patient.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1
_SEP = b"\x1f"


def hash64(*keys: object) -> int:
    """Stable 64-bit hash of a sequence of ints/strings."""
    data = _SEP.join(repr(k).encode("utf-8") for k in keys)
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def stream(seed: int, tag: str) -> np.random.Generator:
    return np.random.default_rng(hash64(seed & _MASK64, tag))


class KeyedStream:
    """Counter-based uniforms: the same keys always give the same draw."""

    def __init__(self, seed: int, tag: str = "keyed") -> None:
        self.seed = hash64(seed & _MASK64, tag)

    def uniform(self, *keys: object) -> float:
        return (hash64(self.seed, *keys) >> 11) * (1.0 / (1 << 53))

    def __repr__(self) -> str:
        return f"KeyedStream(seed={self.seed:#018x})"

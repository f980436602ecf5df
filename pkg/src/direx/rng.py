"""Seeded random streams.

Every random draw in the package comes from a :class:`numpy.random.Generator`
backed by the counter-based Philox bit generator.  Streams are keyed by
``(master seed, label, index)`` through BLAKE2b, so a trial's randomness does
not depend on how many other trials ran before it or in which process.
"""

from __future__ import annotations

import hashlib

import numpy as np

SEED_MAX = 2**64 - 1


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream_key(seed: int, label: str, index: int = 0) -> tuple[int, int]:
    """Derive the two 64-bit Philox key words for a substream."""
    seed = check_seed(seed)
    h = hashlib.blake2b(digest_size=16, person=b"direx-stream")
    h.update(seed.to_bytes(8, "little"))
    h.update(int(index).to_bytes(8, "little", signed=True))
    h.update(label.encode("utf-8"))
    digest = h.digest()
    return int.from_bytes(digest[:8], "little"), int.from_bytes(digest[8:], "little")


def substream(seed: int, label: str, index: int = 0) -> np.random.Generator:
    lo, hi = stream_key(seed, label, index)
    key = np.array([lo, hi], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def random_bits(rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` fair bits as a uint8 array."""
    return rng.integers(0, 2, size=n, dtype=np.uint8)


def _bit_length_u64(v: np.ndarray) -> np.ndarray:
    v = v.astype(np.uint64, copy=True)
    n = np.zeros(v.shape, dtype=np.int64)
    for shift in (32, 16, 8, 4, 2, 1):
        mask = v >= (np.uint64(1) << np.uint64(shift))
        n[mask] += shift
        v[mask] >>= np.uint64(shift)
    n += (v > 0).astype(np.int64)
    return n


def bernoulli_bits(rng: np.random.Generator, p: float, size: int) -> tuple[np.ndarray, int]:
    """Draw ``size`` Bernoulli(p) flags and count the fair bits they consumed.

    Each flag compares a lazily revealed uniform binary expansion against the
    64-bit binary expansion of ``p``; the draw stops at the first differing
    bit, so one flag costs two bits on average and never fewer than one.
    p = 0 and p = 1 consume nothing.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    if size == 0:
        return np.zeros(0, dtype=bool), 0
    if p == 0.0:
        return np.zeros(size, dtype=bool), 0
    if p == 1.0:
        return np.ones(size, dtype=bool), 0
    threshold = np.uint64(int(p * 2**64))
    u = rng.integers(0, 2**64, size=size, dtype=np.uint64, endpoint=False)
    flags = u < threshold
    diff = u ^ threshold
    consumed = np.where(diff == 0, 64, 65 - _bit_length_u64(diff))
    return flags, int(consumed.sum())

"""Counter-based uniforms keyed by ``(seed, index)``.

Every random decision in the package goes through :func:`uniform` (or its
vectorised twin :func:`uniforms`), so that an edge's state depends only on the
seed and the edge index, never on the order in which edges are visited.

The map is bit-exact and platform independent::

    mix64(z):   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
                z = (z ^ (z >> 27)) * 0x94D049BB133111EB
                z =  z ^ (z >> 31)                      (all mod 2**64)

    U(seed, i) = (mix64(mix64(seed) + (i + 1) * 0x9E3779B97F4A7C15) >> 11) / 2**53

``mix64`` is the SplitMix64 output function.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int) -> int:
    """Pre-mixed key for a seed; kernels take this instead of the raw seed."""
    return mix64(seed & MASK64)


def derive(seed: int, *tags: int) -> int:
    """Child seed for an independent sub-stream (e.g. tie-breaking)."""
    z = seed & MASK64
    for t in tags:
        z = mix64((z + (t + 1) * GOLDEN) & MASK64)
    return z


def uniform(seed: int, index: int) -> float:
    h = mix64((stream_key(seed) + (index + 1) * GOLDEN) & MASK64)
    return (h >> 11) * _INV53


def uniforms(seed: int, count: int, start: int = 0) -> np.ndarray:
    """``U(seed, start), ..., U(seed, start + count - 1)`` as float64."""
    with np.errstate(over="ignore"):
        idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
        z = np.uint64(stream_key(seed)) + idx * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * _INV53

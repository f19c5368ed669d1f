"""Reproducible random streams built on splitmix64.

Every stochastic choice in the package (weight init, scene synthesis,
augmentation, sample order) flows through :class:`SeededRng` so runs are
bit-identical across platforms.  The generator is counter-based: output i of
a stream seeded with s is ``mix64(s + (i+1) * GOLDEN)``, which matches the
classic splitmix64 sequence and lets us vectorise draws with numpy uint64
arithmetic (wrapping semantics).
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64


def mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on uint64 arrays (or scalars)."""
    z = (z ^ (z >> _U64(30))) * _MIX1
    z = (z ^ (z >> _U64(27))) * _MIX2
    return z ^ (z >> _U64(31))


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


class SeededRng:
    """Deterministic uniform stream; identical seed gives an identical stream."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._counter = 0

    def raw(self, n: int) -> np.ndarray:
        """Next n raw uint64 outputs."""
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            return mix64(_U64(self.seed) + idx * _GOLDEN)

    def uniform(self, shape=(), low: float = 0.0, high: float = 1.0,
                dtype=np.float32) -> np.ndarray:
        """Uniform floats in [low, high); 24-bit mantissas so float32 is exact."""
        n = int(np.prod(shape)) if shape else 1
        u = (self.raw(n) >> _U64(40)).astype(np.float64) / float(1 << 24)
        out = (low + (high - low) * u).astype(dtype)
        return out.reshape(shape) if shape else out[0]

    def randint(self, bound: int) -> int:
        """Integer in [0, bound). Modulo bias is negligible for bound << 2^64."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return int(self.raw(1)[0] % _U64(bound))

    def choice(self, seq):
        return seq[self.randint(len(seq))]

    def shuffle(self, seq: list) -> list:
        """In-place Fisher-Yates shuffle; returns seq for convenience."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randint(i + 1)
            seq[i], seq[j] = seq[j], seq[i]
        return seq

    def derive(self, label) -> "SeededRng":
        """Independent child stream keyed by an int or string label."""
        if isinstance(label, str):
            tag = _fnv1a64(label.encode("utf-8"))
        else:
            tag = int(label) & 0xFFFFFFFFFFFFFFFF
        with np.errstate(over="ignore"):
            child = int(mix64(_U64(self.seed) ^ mix64(_U64(tag) + _GOLDEN)))
        return SeededRng(child)

"""Deterministic random streams.

Every randomized operation in the package draws from an :class:`RngStream`,
a thin wrapper around numpy's counter-based Philox generator keyed by a
``(seed, stream)`` pair.  The same pair yields the same scalar sequence on
every platform, and distinct stream ids give statistically independent
sequences, so experiments can hand out substreams without coordinating.
"""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def splitmix64(x: int) -> int:
    """One round of the splitmix64 mixer (used to derive child stream ids)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


class RngStream:
    """A reproducible random stream identified by ``(seed, stream)``.

    Draw methods advance the stream; reconstructing the object replays the
    identical sequence.  Use :meth:`child` to derive independent substreams
    deterministically (e.g. one per restart or per benchmark cell).
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream={self.stream})"

    def child(self, index: int) -> "RngStream":
        """Derive the ``index``-th independent substream of this stream."""
        mixed = splitmix64(self.stream ^ splitmix64(index & _MASK64))
        return RngStream(self.seed, mixed)

    def standard_normal(self, shape=None) -> np.ndarray:
        return self._gen.standard_normal(size=shape)

    def uniform(self, low: float = 0.0, high: float = 1.0, shape=None) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

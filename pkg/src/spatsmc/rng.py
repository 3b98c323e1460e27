"""Counter-based random streams.

Every stochastic operation in the package draws from a ``numpy`` Philox
generator keyed by a seed plus a tuple of stream ids.  Identical
``(seed, ids)`` always reproduces the same draw sequence, and distinct id
tuples give statistically independent streams, so parallel work can be keyed
by task index instead of scheduling order.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["RngStream", "as_stream"]


def _id_to_int(x) -> int:
    if isinstance(x, (int, np.integer)):
        return int(x) & 0xFFFFFFFF
    if isinstance(x, str):
        return zlib.crc32(x.encode("utf8"))
    raise TypeError(f"stream id must be int or str, got {type(x).__name__}")


class RngStream:
    """A reproducible random stream addressed by (seed, ids...)."""

    __slots__ = ("seed", "ids", "_generator")

    def __init__(self, seed: int, ids: tuple = ()):
        self.seed = int(seed)
        self.ids = tuple(_id_to_int(i) for i in ids)
        self._generator = None

    def child(self, *ids) -> "RngStream":
        """Derive an independent stream for a sub-task."""
        return RngStream(self.seed, self.ids + ids)

    @property
    def generator(self) -> np.random.Generator:
        """The numpy Generator for this stream (created lazily, cached)."""
        if self._generator is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.ids)
            self._generator = np.random.Generator(np.random.Philox(ss))
        return self._generator

    def __repr__(self):
        return f"RngStream(seed={self.seed}, ids={self.ids})"


def as_stream(rng) -> RngStream:
    """Coerce an int seed or RngStream to an RngStream."""
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError(f"expected an int seed or RngStream, got {type(rng).__name__}")

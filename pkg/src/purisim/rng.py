"""Reproducible random number streams for parallel Monte Carlo.

Every sampler in this package takes an explicit stream.  Streams are built
on Philox, a counter-based generator, keyed through ``SeedSequence`` so that
``(seed, stream_index)`` pairs give statistically independent sequences that
do not depend on scheduling, thread count, or platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """A (seed, stream_index) label identifying one reproducible stream.

    Distinct ``stream_index`` values (trajectory / walker / worker labels)
    yield independent streams for the same seed.
    """

    seed: int
    stream_index: int = 0

    def __post_init__(self) -> None:
        if self.stream_index < 0:
            raise ValueError(f"stream_index must be >= 0, got {self.stream_index}")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_index,))
        return np.random.Generator(np.random.Philox(ss))

    def substream(self, index: int) -> "RngStream":
        """Derived stream for walker/worker ``index`` of this stream.

        Uses a disjoint spawn key, so substreams never collide with
        top-level streams of the same seed.
        """
        return _SubStream(self.seed, self.stream_index, index)


@dataclass(frozen=True)
class _SubStream(RngStream):
    """Stream derived from a parent (seed, stream_index) and a child index."""

    child_index: int = 0

    def __init__(self, seed: int, stream_index: int, child_index: int):
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "stream_index", stream_index)
        object.__setattr__(self, "child_index", child_index)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            self.seed, spawn_key=(self.stream_index, self.child_index)
        )
        return np.random.Generator(np.random.Philox(ss))

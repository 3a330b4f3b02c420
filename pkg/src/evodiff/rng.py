"""Counter-based random streams.

Every draw is a pure function of (seed, stream label, step t, sample index i):
each tuple selects a disjoint region of a Philox-4x64 counter space, so
distinct labels or counters never overlap and any draw can be replayed in
isolation. This is what makes paired guided/unguided runs share trajectory
noise exactly, and lets population sample i be regenerated without drawing
samples 0..i-1 first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

STREAM_LABELS = ("trajectory", "population", "dataset", "training")
_LABEL_IDS = {name: idx + 1 for idx, name in enumerate(STREAM_LABELS)}

_MASK64 = (1 << 64) - 1


def mix_seed(seed: int, *salts: int) -> int:
    """Derive a child seed from (seed, salts) via splitmix64 steps.

    Used to give every (run, arm) its own root seed while staying a pure
    function of the inputs.
    """
    z = seed & _MASK64
    for salt in salts:
        z = (z + 0x9E3779B97F4A7C15 + (salt & _MASK64)) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z = z ^ (z >> 31)
    return z


@dataclass(frozen=True)
class RngStream:
    """One named, counter-addressed stream of standard normal draws.

    The stream itself is immutable; callers address draws by (t, i)
    counters. Value-like: hand copies to concurrent workers freely.
    """

    seed: int
    stream_label: str

    def __post_init__(self):
        if self.stream_label not in _LABEL_IDS:
            raise ValueError(f"unknown stream label {self.stream_label!r}")

    @property
    def _key(self):
        return [self.seed & _MASK64, _LABEL_IDS[self.stream_label]]

    def normal(self, t: int, i: int, n: int) -> np.ndarray:
        """n standard normal draws at counter (t, i); replayable in isolation."""
        gen = Generator(Philox(key=self._key, counter=[0, i & _MASK64, t & _MASK64, 0]))
        return gen.standard_normal(n)

    def integers(self, t: int, i: int, n: int, high: int) -> np.ndarray:
        """n uniform integers in [0, high) at counter (t, i), disjoint region."""
        gen = Generator(Philox(key=self._key, counter=[0, i & _MASK64, t & _MASK64, 2]))
        return gen.integers(0, high, size=n)

    def normal_block(self, t: int, n_samples: int, dim: int) -> np.ndarray:
        """(n_samples, dim) standard normals in one generator pass.

        Lives in a counter region disjoint from per-sample normal() draws
        (high word set), so block and per-sample use can coexist. Meant for
        large Monte-Carlo diagnostics where per-sample isolation is not
        needed; a block is reproducible as a whole.
        """
        gen = Generator(Philox(key=self._key, counter=[0, 0, t & _MASK64, 1]))
        return gen.standard_normal((n_samples, dim))

    def derive(self, *salts: int) -> "RngStream":
        """Same label, child seed; for per-run / per-arm substreams."""
        return RngStream(mix_seed(self.seed, *salts), self.stream_label)

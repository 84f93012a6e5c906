"""Deterministic random number streams.

All stochastic code in the package draws from numpy Generators built from an
:class:`RngState`. A state is (seed, algorithm, key); the key is a tuple of
nonnegative integers identifying a substream, so parallel chains, observations,
and pipeline stages get independent, reproducible streams:

    root = RngState(seed=7)
    chain3 = root.split(3)            # independent of root and of split(4)
    gen = chain3.generator()          # fresh Generator at the stream origin

Identical (seed, algorithm, key) always yields an identical draw sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_ALGORITHMS = {
    "pcg64": np.random.PCG64,
    "philox": np.random.Philox,
}


@dataclass(frozen=True)
class RngState:
    """Seed, generator algorithm, and substream key."""

    seed: int
    algorithm: str = "pcg64"
    key: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.algorithm not in _ALGORITHMS:
            raise ValueError(
                f"unknown rng algorithm {self.algorithm!r}; "
                f"expected one of {sorted(_ALGORITHMS)}"
            )
        if not all(isinstance(k, (int, np.integer)) and k >= 0 for k in self.key):
            raise ValueError("substream key entries must be nonnegative integers")

    def split(self, *path: int) -> "RngState":
        """Return the substream state at ``key + path``."""
        return RngState(self.seed, self.algorithm, self.key + tuple(int(p) for p in path))

    def generator(self) -> np.random.Generator:
        """Fresh Generator positioned at the origin of this stream."""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        return np.random.Generator(_ALGORITHMS[self.algorithm](seq))


def as_generator(rng) -> np.random.Generator:
    """Coerce an RngState, Generator, or integer seed into a Generator.

    Generators pass through unchanged, so stateful call sequences can be
    threaded through multiple sampling calls.
    """
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngState):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngState(int(rng)).generator()
    raise TypeError(f"cannot build a Generator from {type(rng).__name__}")

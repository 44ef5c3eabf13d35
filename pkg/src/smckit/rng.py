"""Deterministic random streams built on the counter-based Philox generator.

One root seed governs a whole run.  Sub-streams are derived from the seed
plus a fixed integer path (e.g. ``(algorithm, time, purpose)``) through
``numpy.random.SeedSequence`` spawn keys, so the values drawn at one point
of an algorithm never depend on how many draws happened elsewhere.  This is
what makes single-threaded and chunk-parallel execution produce identical
results: all draws for a time step come from that step's own stream, in one
vectorized call, before any worker threads touch the data.
"""

from __future__ import annotations

import numpy as np

# Fixed path roots, one per consumer of randomness.  Values are arbitrary
# but frozen: changing them changes every seeded result.
STREAM_INIT = 1
STREAM_PROPAGATE = 2
STREAM_RESAMPLE = 3
STREAM_CONTAINER = 4
STREAM_LOOKAHEAD = 5
STREAM_PERTURB = 6
STREAM_OBS_NOISE = 7
STREAM_PMMH = 8
STREAM_DATA = 9


class RngState:
    """A positioned random stream identified by (seed, path).

    Two instances with the same seed and path produce bit-identical draw
    sequences.  ``stream(*path)`` derives an independent child stream at a
    fresh position; the parent's position is unaffected.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.Philox(ss))

    def stream(self, *path: int) -> "RngState":
        return RngState(self.seed, self.path + path)

    # Thin delegation so callers can draw without reaching for .generator.
    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def beta(self, a, b, size=None):
        return self.generator.beta(a, b, size)

    def gamma(self, shape, scale=1.0, size=None):
        return self.generator.gamma(shape, scale, size)

    def random(self, size=None):
        return self.generator.random(size)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def __repr__(self) -> str:
        return f"RngState(seed={self.seed}, path={self.path})"

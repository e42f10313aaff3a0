"""Seeded random streams.

All randomness in a run derives from one 64-bit master seed. Independent
sub-streams are addressed by integer keys (epoch, batch index, stage tag, ...)
so results never depend on call interleaving across stages.
"""

import numpy as np

MASK64 = (1 << 64) - 1


class Rng:
    algorithm = "PCG64"

    def __init__(self, seed, key=()):
        self.seed = int(seed) & MASK64
        self.key = tuple(int(k) for k in key)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.gen = np.random.Generator(np.random.PCG64(seq))

    def child(self, *key):
        """Independent stream identified by ``key`` under the same seed."""
        return Rng(self.seed, self.key + tuple(key))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def standard_normal(self, size=None):
        return self.gen.standard_normal(size)

    def gumbel(self, size=None):
        return np.asarray(self.gen.gumbel(size=size), dtype=np.float32)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def permutation(self, n):
        return self.gen.permutation(n)

    def choice(self, n, p=None, size=None):
        return self.gen.choice(n, p=p, size=size)

    def get_state(self):
        return {"seed": self.seed, "key": list(self.key), "bit_generator": self.gen.bit_generator.state}

    @classmethod
    def from_state(cls, state):
        rng = cls(state["seed"], state["key"])
        rng.gen.bit_generator.state = state["bit_generator"]
        return rng

    def __repr__(self):
        return f"Rng(seed={self.seed}, key={self.key})"

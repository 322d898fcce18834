"""Counter-based splitmix64 generator.

Every draw is a pure function of ``(seed, counter)``, so whole blocks are
generated with vectorized uint64 arithmetic and streams are reproducible
bit for bit.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_CHILD_SALT = 0xD1B54A32D192ED03


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def _mix_int(value: int) -> int:
    return int(_mix(np.array([value & _MASK], dtype=np.uint64))[0])


class Rng:
    """Deterministic generator; single owner, never shared between threads."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self._counter = 0

    def child(self, key: int) -> "Rng":
        """Independent generator for sub-task ``key`` (e.g. a trial index)."""
        return Rng(_mix_int(self.seed ^ _mix_int((int(key) + 1) * _CHILD_SALT)))

    def bits(self, size: int) -> np.ndarray:
        steps = np.arange(self._counter + 1, self._counter + size + 1, dtype=np.uint64)
        self._counter += size
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + steps * np.uint64(_GOLDEN)
        return _mix(z)

    def random(self, shape=()) -> np.ndarray:
        """Uniform doubles on [0, 1) with 53 bits of mantissa."""
        size = int(np.prod(shape, dtype=np.int64))
        u = (self.bits(size) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return u.reshape(shape)

    def uniform(self, low: float = 0.0, high: float = 1.0, shape=()) -> np.ndarray:
        return low + (high - low) * self.random(shape)

    def normal(self, shape=(), scale: float = 1.0) -> np.ndarray:
        """Standard Gaussians by Box-Muller, two per pair of uniforms."""
        size = int(np.prod(shape, dtype=np.int64))
        pairs = (size + 1) // 2
        u = self.random((pairs, 2))
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        angle = 2.0 * np.pi * u[:, 1]
        z = np.empty((pairs, 2))
        z[:, 0] = radius * np.cos(angle)
        z[:, 1] = radius * np.sin(angle)
        return scale * z.reshape(-1)[:size].reshape(shape)

    def integers(self, low: int, high: int) -> int:
        """One integer uniform on the closed range [low, high]."""
        span = high - low + 1
        if span <= 0:
            raise ValueError(f"empty range [{low}, {high}]")
        return low + int(self.bits(1)[0] % np.uint64(span))

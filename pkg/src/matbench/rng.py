"""SplitMix64 stream used wherever the package needs reproducible draws.

The same sequence is produced by the scalar generator and the vectorised
helper, so weight generation and shuffling stay bit-identical no matter
which path computes them.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Scalar SplitMix64 generator (SplittableRandom mixing constants)."""

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + GOLDEN_GAMMA) & MASK64
        return _mix(self._state)

    def next_float(self) -> float:
        # top 53 bits as the mantissa -> uniform in [0, 1)
        return (self.next_u64() >> 11) * 2.0**-53

    def below(self, n: int) -> int:
        # modulo bias is irrelevant at desk scale and keeps the draw portable
        return self.next_u64() % n

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


def uniform_array(seed: int, count: int) -> np.ndarray:
    """First `count` next_float() draws of SplitMix64(seed), vectorised."""
    if count == 0:
        return np.zeros(0, dtype=np.float64)
    steps = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(seed & MASK64) + steps * np.uint64(GOLDEN_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53

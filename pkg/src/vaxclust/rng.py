"""Self-contained deterministic pseudo-random generator.

All stochastic artifact paths (synthetic data, boosting permutations, fold
shuffles) use this generator instead of library RNGs so that fixtures are
reproducible from (algorithm, seed) alone, in any language.

Algorithm (splitmix64):
    state <- (state + 0x9E3779B97F4A7C15) mod 2^64
    z <- state
    z <- (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9   mod 2^64
    z <- (z XOR (z >> 27)) * 0x94D049BB133111EB   mod 2^64
    output = z XOR (z >> 31)

Derived draws:
    uniform()  = (next_u64 >> 11) * 2^-53              in [0, 1)
    normal()   = Box-Muller: sqrt(-2 ln u1) * cos(2 pi u2),
                 with u1 = (next_u64 >> 11 + 1) * 2^-53 in (0, 1]
    randint(n) = rejection sampling on next_u64 to avoid modulo bias
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base: int, *components: int) -> int:
    """Mix extra integer components into a base seed, deterministically."""
    z = base & _MASK64
    for c in components:
        z = _mix((z + _GAMMA + (c & _MASK64)) & _MASK64)
    return z


class Rng:
    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _mix(self._state)

    def uniform(self) -> float:
        return (self.u64() >> 11) * 2.0**-53

    def normal(self, mean: float = 0.0, sd: float = 1.0) -> float:
        u1 = ((self.u64() >> 11) + 1) * 2.0**-53
        u2 = (self.u64() >> 11) * 2.0**-53
        return mean + sd * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n). Rejection sampling keeps it unbiased."""
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = (_MASK64 + 1) - ((_MASK64 + 1) % n)
        while True:
            r = self.u64()
            if r < threshold:
                return r % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        order = list(range(n))
        self.shuffle(order)
        return order

    def categorical(self, probabilities) -> int:
        """Index sampled from a discrete distribution (probabilities sum to 1)."""
        u = self.uniform()
        acc = 0.0
        for i, p in enumerate(probabilities):
            acc += p
            if u < acc:
                return i
        return len(probabilities) - 1

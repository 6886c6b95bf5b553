"""
Seeded random streams for reproducible runs.

SplitMix64 is used wherever a draw sequence must be identical across
platforms and Python versions (dynamic-collision injection, per-episode seed
derivation). numpy generators are seeded from it for bulk noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """SplitMix64 generator (Steele, Lea, Flood 2014 constants)."""

    def __init__(self, seed: int):
        self._seed = seed & MASK64
        self._state = self._seed

    @property
    def seed(self) -> int:
        return self._seed

    def next_u64(self) -> int:
        self._state = (self._state + GOLDEN_GAMMA) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision"""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


def derive_seed(seed: int, *keys: int) -> int:
    """Mix a run seed with integer keys into an independent 31-bit seed"""
    stream = SplitMix64(seed)
    value = stream.next_u64()
    for key in keys:
        value = SplitMix64(value ^ (key & MASK64)).next_u64()
    return value >> 33


@dataclass
class DynamicInjector:
    """Flags a selected waypoint as non-navigable with probability p."""

    p: float = 0.10
    seed: int = 0
    draws: List[bool] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"injection probability must be in [0, 1], got {self.p}")
        self._stream = SplitMix64(self.seed)

    def inject(self, node_id=None) -> bool:
        # one draw per waypoint selection, even when p is 0 or 1
        flagged = self._stream.random() < self.p
        self.draws.append(flagged)
        return flagged


def inject(injector: DynamicInjector, node_id=None) -> bool:
    return injector.inject(node_id)

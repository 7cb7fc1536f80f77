"""Deterministic seed derivation.

Every stochastic component in the package draws from a numpy PCG64 generator
seeded through `mix_seed`, a splitmix64-style hash of (master seed, row, col).
The same derivation is used everywhere (observation noise, truth-field
synthesis, per-pixel GA seeding) so that results replay exactly for a given
master seed, independent of execution order or distribution strategy.
"""

import numpy as np

MASK64 = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(x: int) -> int:
    """One splitmix64 step: advance by the golden-ratio gamma and finalize."""
    x = (x + _GAMMA) & MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & MASK64
    return (x ^ (x >> 31)) & MASK64


def mix_seed(seed: int, row: int, col: int) -> int:
    """Derive a per-pixel 64-bit seed from a master seed and grid coordinates.

    row/col are offset by 1 before hashing so that (seed, 0, 0) does not
    collapse onto the plain master seed.
    """
    h = splitmix64(seed & MASK64)
    h = splitmix64(h ^ splitmix64((row + 1) & MASK64))
    h = splitmix64(h ^ splitmix64((col + 1) & MASK64))
    return h


def make_rng(seed: int) -> np.random.Generator:
    """Build the package-standard generator for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(seed & MASK64))

"""Seeded random streams.

All randomness in the package flows through Philox, a counter-based 64-bit
bit generator, so that every driver and generator is a pure function of its
integer seed.  Independent sub-streams (e.g. core vs. factor entries of a
synthetic tensor, or sketch vs. solver randomness of a driver) are derived by
spawning children of the seed's SeedSequence, never by reusing or offsetting
raw seeds.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed):
    """Generator for the given integer seed (or pass a Generator through)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def split_rng(seed, n):
    """n independent Generators derived from one integer seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.Philox(c)) for c in children]

"""Counter-based deterministic RNG streams.

Every random draw in the package comes from a generator keyed by an explicit
tuple of integers (seed, round, client, ...), so results never depend on call
order or host parallelism.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def seeded_rng(*keys: int) -> np.random.Generator:
    """Return a Generator determined entirely by the given integer keys."""
    entropy = [int(k) & _MASK64 for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))

from __future__ import annotations

from typing import Dict

import numpy as np

RNG_ALGORITHM = "Philox4x64-10"
SEEDING = "SeedSequence([seed, stream])"


def make_stream(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one named stream of a run.

    Philox is counter based, so the same (seed, stream) pair gives the same
    draws on every machine and numpy build that ships the bit generator.
    """
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative integers")
    sequence = np.random.SeedSequence([int(seed), int(stream)])
    return np.random.Generator(np.random.Philox(sequence))


def rng_metadata(seed: int) -> Dict[str, object]:
    return {"algorithm": RNG_ALGORITHM, "seeding": SEEDING, "seed": int(seed), "numpy": np.__version__}

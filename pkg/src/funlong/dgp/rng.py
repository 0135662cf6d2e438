"""Counter-based random streams.

Each simulation purpose gets its own Philox stream keyed by (seed, tag).
Every stream consumes a fixed number of variates per subject and grid step
regardless of realized values, so swapping the treatment mechanism (for a
counterfactual re-run) leaves all other streams bit-identical.
"""
from __future__ import annotations

import numpy as np

STREAM_TAGS = {
    "treatment": 1,
    "covariate": 2,
    "death": 3,
    "censor": 4,
    "init": 5,
    "event_loop": 6,
    "bootstrap": 7,
}


def stream(seed: int, tag: str) -> np.random.Generator:
    if tag not in STREAM_TAGS:
        raise KeyError(f"unknown stream tag {tag!r}")
    ss = np.random.SeedSequence([int(seed), STREAM_TAGS[tag]])
    return np.random.Generator(np.random.Philox(ss))

"""Seedable, platform-stable random streams with per-stage substreams.

All stochastic stages of the generative model draw from Philox counter-based
generators. Each stage salts the user seed with a fixed stage index, so the
stream consumed by one stage never shifts the draws of another (adding a stage
or changing how many numbers one stage consumes leaves the rest untouched).
"""

from __future__ import annotations

import numpy as np

STAGE_AFFINE = 0
STAGE_WARP = 1
STAGE_GMM = 2
STAGE_BIAS = 3
STAGE_ACQUISITION = 4
STAGE_NOISE = 5


def stage_rng(seed: int, stage: int) -> np.random.Generator:
    """Generator for one stage of one sample; same (seed, stage) -> same stream."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be a u64, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stage),))
    return np.random.Generator(np.random.Philox(ss))

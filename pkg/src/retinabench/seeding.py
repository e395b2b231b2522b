"""Deterministic seed derivation for data loading and augmentation.

SeedSequence composition keeps every stream reproducible across platforms
and independent of iteration order, without ever touching global RNG state.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 63) - 1  # SeedSequence entropy must be nonnegative


def per_sample_seed(base_seed: int, epoch: int, sample_index: int) -> int:
    """Stable augmentation seed for one sample in one epoch."""
    ss = np.random.SeedSequence([base_seed & _MASK, epoch, int(sample_index)])
    return int(ss.generate_state(1)[0])


def shuffle_rng(base_seed: int, epoch: int) -> np.random.Generator:
    """Generator that drives the training-order shuffle of one epoch."""
    return np.random.default_rng(
        np.random.SeedSequence([base_seed & _MASK, epoch, 0x5FFE])
    )

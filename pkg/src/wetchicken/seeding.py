"""Deterministic RNG streams.

Every experiment seed is split into independent per-purpose streams by a
counter-based derivation: stream ``i`` of seed ``s`` is
``numpy.random.SeedSequence((s, i))``. Modules never share a Generator, so
reordering work (e.g. across worker processes) cannot change any result.
"""
from __future__ import annotations

import numpy as np

# Stream ids. Fixed forever; appending new ids is fine, renumbering is not.
STREAM_DATA = 0
STREAM_MODEL = 1
STREAM_POLICY = 2
STREAM_EVAL = 3
STREAM_GRIDS = 4


def seed_rng(seed: int, stream: int) -> np.random.Generator:
    """Generator for (seed, stream), independent of every other stream."""
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(stream))))

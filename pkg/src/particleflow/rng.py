"""Deterministic random streams built on the Philox counter-based generator.

Every random draw in the library is keyed by (seed, stream, substream), so a
run is reproducible bit for bit regardless of execution order or thread
count. Normal variates come from numpy's ziggurat implementation.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream ids. Values are part of the reproducibility contract; do not renumber.
PROBLEM = 1
INIT = 2
MOTION = 3
FIELD_CHECK = 4
POSE_PROBLEM = 5
POSE_INIT = 6

GENERATOR_NAME = "philox4x64 counter-based (numpy Generator, ziggurat normals)"


def stream(seed: int, stream_id: int, substream: int = 0) -> np.random.Generator:
    """Generator for one (seed, stream, substream) triple."""
    if seed < 0 or stream_id < 0 or substream < 0:
        raise ValueError("seed, stream_id and substream must be nonnegative")
    key = np.array(
        [seed & _MASK64, ((stream_id & 0xFFFFFFFF) << 32) | (substream & 0xFFFFFFFF)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))

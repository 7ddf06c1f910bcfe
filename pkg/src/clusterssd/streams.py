"""Deterministic RNG substreams for parallel simulation.

Each unit of work (simulation repetition, bootstrap resample, ...) owns a
private generator derived from the master seed and a small integer path, so
results never depend on worker count or scheduling order.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "phase_tag"]


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Generator for the work unit identified by (master_seed, *path).

    The same (seed, path) always yields the same stream; distinct paths give
    statistically independent streams (SeedSequence hashing).
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    return np.random.default_rng(ss)


def phase_tag(label: str) -> int:
    """Stable small integer identifying a simulation phase by name."""
    return zlib.crc32(label.encode("utf-8"))

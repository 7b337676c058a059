"""Deterministic RNG spawning and atomic file writes."""
from __future__ import annotations

import os
import tempfile

import numpy as np

_MASK = (1 << 63) - 1


def spawn_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator whose stream is a pure function of (seed, *key).

    Independent keys give independent streams, so parallel replicates can
    be merged by index without order effects.
    """
    entropy = [int(seed) & _MASK] + [int(k) & _MASK for k in key]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def spawn_seed(seed: int, *key: int) -> int:
    """A derived integer seed, usable wherever a plain seed is expected."""
    return int(spawn_rng(seed, *key).integers(0, 1 << 62))


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file plus rename so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

"""Named, independently reproducible random streams derived from one seed."""
from __future__ import annotations

import hashlib

import numpy as np


def stream_key(name: str) -> int:
    # stable across processes, unlike hash()
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")


def substream(seed: int, *names) -> np.random.Generator:
    """Generator for ``seed`` and a path of names/ints, e.g. ``substream(3, "worker", 2)``."""
    key = tuple(stream_key(n) if isinstance(n, str) else int(n) for n in names)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))

"""Seed derivation.

All randomness comes from an explicit integer seed combined with a tuple of
keys (stage names, epoch or pass counters).  The combination is hashed, so
two stages never share a stream and any stage can be rerun on its own.
"""
import hashlib

import numpy as np


def derive_seed(seed: int, *keys) -> int:
    payload = repr((int(seed),) + tuple(keys)).encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


def make_rng(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))

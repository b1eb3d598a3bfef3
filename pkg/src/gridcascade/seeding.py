"""Deterministic seed derivation with domain separation.

Every stage (training data, held-out pools, exposure samples, model init)
draws from its own stream derived from the master seed and a string tag, so
no stage's consumption of randomness can perturb another's.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 63) - 1


def derive_seed(master: int, *tags: object) -> int:
    """Hash (master, tags...) to a stable 63-bit seed."""
    text = ":".join([str(int(master))] + [str(t) for t in tags])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & _MASK


def rng_for(master: int, *tags: object) -> np.random.Generator:
    """A fresh generator on the (master, tags...) stream."""
    return np.random.default_rng(derive_seed(master, *tags))

"""Deterministic RNG derivation.

Every random decision in the pipeline draws from a generator derived by
hashing the master seed together with the identifiers of the work item
(node id, prompt id, slot index, ...).  Derivation through SHA-256 keeps
results identical across processes, platforms and worker counts, unlike
Python's builtin ``hash``.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(master_seed: int, *parts: object) -> int:
    """Map (master_seed, parts...) to a stable 64-bit seed."""
    key = "\x1f".join([str(master_seed), *(str(p) for p in parts)])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(master_seed: int, *parts: object) -> random.Random:
    """A ``random.Random`` seeded from (master_seed, parts...)."""
    return random.Random(derive_seed(master_seed, *parts))

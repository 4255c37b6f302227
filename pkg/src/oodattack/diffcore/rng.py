"""Seeded, splittable random streams with no global state.

Streams are counter-based (Philox, 64-bit words): a master seed plus a
string label keys an independent generator, so experiment stages can be
rerun in isolation without replaying each other's draws.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _label_word(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "big")


def stream(seed: int, label: str = "") -> np.random.Generator:
    """Independent generator keyed by (seed, label)."""
    key = np.array([seed & _MASK64, _label_word(label)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def child_seed(seed: int, label: str) -> int:
    """Derive a stable 63-bit child seed for components taking plain seeds."""
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1

"""Derived random streams.

A master seed plus a tuple of labels (purpose, node, block index, ...) maps to
an independent numpy Generator. The label hash is stable across processes, so
results do not depend on scheduling or PYTHONHASHSEED.
"""
from __future__ import annotations

import hashlib

import numpy as np

DEFAULT_SEED = 20240531


def _label_words(labels) -> list[int]:
    text = repr(tuple(_canonical(x) for x in labels)).encode()
    digest = hashlib.blake2b(text, digest_size=16).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def _canonical(x):
    if isinstance(x, (set, frozenset)):
        return tuple(sorted(x))
    if isinstance(x, (list, tuple)):
        return tuple(_canonical(v) for v in x)
    return x


def derive_seed(seed: int, *labels) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *_label_words(labels)])


def derive_rng(seed: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *labels))


def derive_int(seed: int, *labels) -> int:
    """A derived 63-bit integer seed, for handing to another seeded routine."""
    return int(derive_seed(seed, *labels).generate_state(2, np.uint32).view(np.uint64)[0] >> 1)

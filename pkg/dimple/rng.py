"""Seeded counter-based random streams.

Every random draw in a simulation comes from a numpy ``Generator`` backed by
the Philox counter-based bit generator. A stream is addressed by a root seed
and an integer key path, e.g. ``substream(seed, LOADING, l)`` for the loading
matrix of layer ``l``. Streams with different keys are independent, and a
stream's output does not depend on which other streams were used before it,
so replications and layers can run in any order or in parallel.
"""
from __future__ import annotations

import hashlib

import numpy as np

# key-path roots
LABELS = 0
LATENT = 1
LOADING = 2
ADJACENCY = 3
KMEANS = 4

_SEED_MASK = (1 << 64) - 1


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``seed`` and the key path ``key``."""
    seq = np.random.SeedSequence(int(seed) & _SEED_MASK, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def replication_seed(base_seed: int, n: int, L: int, replication: int) -> int:
    """64-bit seed of one replication of the (n, L) cell.

    The algorithm is not part of the hash: all algorithms run on a
    replication see the same network sample.
    """
    token = f"{int(base_seed)}:{int(n)}:{int(L)}:{int(replication)}".encode("ascii")
    digest = hashlib.blake2b(token, digest_size=8).digest()
    return int.from_bytes(digest, "little")

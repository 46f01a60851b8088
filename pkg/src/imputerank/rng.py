"""Deterministic, scheduling-independent random streams.

Every stochastic step in the pipeline draws from a stream derived from the
master seed plus a purpose tag (e.g. row index, algorithm name), so results
do not depend on execution order or worker count.
"""

import hashlib

import numpy as np


def derive_seed(master_seed: int, *parts) -> int:
    """Derive a stable 64-bit child seed from a master seed and key parts.

    Parts may be ints or strings. Uses blake2b, so the mapping is stable
    across processes and platforms (unlike the builtin ``hash``).
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master_seed)).encode())
    for part in parts:
        h.update(b"\x1f")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "big")


def derive_rng(master_seed: int, *parts) -> np.random.Generator:
    """Generator seeded by :func:`derive_seed`."""
    return np.random.default_rng(derive_seed(master_seed, *parts))

"""Named, counter-based random streams.

Every randomized operation takes an explicit ``numpy.random.Generator``.
Streams are keyed by name so that parallel data generation stays
reproducible: the stream for (image id, spec label, stage index) never
depends on evaluation order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream(*names: object) -> np.random.Generator:
    """Return an independent Philox stream keyed by the given names.

    Names may be ints, strings, or anything with a stable ``str()``.
    Equal name tuples always yield identical streams.
    """
    tag = "\x1f".join(str(n) for n in names).encode("utf-8")
    entropy = int.from_bytes(hashlib.sha256(tag).digest()[:16], "little")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(*names: object) -> int:
    """Derive a 63-bit integer seed from names (for libraries that want one)."""
    tag = "\x1f".join(str(n) for n in names).encode("utf-8")
    return int.from_bytes(hashlib.sha256(tag).digest()[:8], "little") >> 1

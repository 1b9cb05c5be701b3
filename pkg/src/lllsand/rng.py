"""Reproducible random streams.

Every stream is a numpy ``Philox4x64-10`` counter-based generator.  The
128-bit key is ``seed + (trial << 64)`` and the top word of the 256-bit
counter carries a ``purpose`` tag, so input sampling and the dynamics of a
trial draw from disjoint, order-independent streams::

    stream(seed, trial, purpose)

First four ``random_raw`` outputs of ``stream(0, 0, 0)`` are recorded in
``TEST_VECTOR_SEED0`` and checked by the test suite.
"""

from __future__ import annotations

import numpy as np

#: purpose tags
INPUT = 0
DYNAMICS = 1

_MASK64 = (1 << 64) - 1

TEST_VECTOR_SEED0 = (
    0x02F4BA6408E4D89B,
    0x3DD62B0B9CA8C5B2,
    0x1C8667A55D902E79,
    0x907D7A052FD5B4DC,
)


def stream(seed: int, trial: int = 0, purpose: int = INPUT) -> np.random.Generator:
    """Return the generator for ``(seed, trial, purpose)``."""
    seed = int(seed) & _MASK64
    trial = int(trial)
    if trial < 0 or trial > _MASK64:
        raise ValueError(f"trial index out of range: {trial}")
    bitgen = np.random.Philox(key=seed + (trial << 64), counter=[0, 0, 0, int(purpose)])
    return np.random.Generator(bitgen)


def random_bits(rng: np.random.Generator, bits: int) -> int:
    """Uniform Python integer in ``[0, 2**bits)`` built from 64-bit words."""
    if bits <= 0:
        return 0
    words = (bits + 63) // 64
    raw = rng.integers(0, 1 << 64, size=words, dtype=np.uint64, endpoint=False)
    value = 0
    for w in raw:
        value = (value << 64) | int(w)
    return value >> (64 * words - bits)

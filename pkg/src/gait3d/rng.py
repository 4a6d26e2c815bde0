"""Deterministic seed derivation.

All randomness in a run flows from one root seed. Sub-seeds for independent
concerns (parameter init, shuffling, dropout, per-sequence noise, ...) are
derived by mixing the root seed with string/integer labels through a
splitmix64 finalizer, so each module's stream is reproducible on its own:

    seed' = splitmix64(root ^ fnv1a64(label_0) ^ ... )

applied once per label, chaining the state. Same root + same labels always
yields the same sub-seed; distinct label paths decorrelate.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One splitmix64 step: advance and finalize a 64-bit state."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def derive_seed(root: int, *labels: int | str) -> int:
    """Derive a 64-bit sub-seed from ``root`` and a label path."""
    state = splitmix64(root & _MASK64)
    for label in labels:
        if isinstance(label, str):
            mixed = _fnv1a64(label.encode("utf-8"))
        else:
            mixed = splitmix64(int(label) & _MASK64)
        state = splitmix64(state ^ mixed)
    return state


def generator(root: int, *labels: int | str) -> np.random.Generator:
    """PCG64 generator seeded from the derived sub-seed."""
    return np.random.Generator(np.random.PCG64(derive_seed(root, *labels)))

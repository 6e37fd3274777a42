"""Deterministic random-number substreams.

All randomness in the package flows through counter-based Philox generators
keyed by a master seed plus a tuple of integer or string tags.  Two calls
with the same key always yield identical streams, independently of call
order, thread schedule, or how many other streams were consumed in between.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import InvalidParameterError

_MASK64 = (1 << 64) - 1


def _tag_to_int(tag) -> int:
    if isinstance(tag, (bool,)):
        raise InvalidParameterError("boolean stream tags are ambiguous")
    if isinstance(tag, (int, np.integer)):
        return int(tag) & _MASK64
    if isinstance(tag, str):
        digest = hashlib.blake2s(tag.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise InvalidParameterError(f"unsupported stream tag type: {type(tag).__name__}")


def substream(seed: int, *tags) -> np.random.Generator:
    """Return a fresh generator keyed by ``(seed, *tags)``."""
    entropy = [int(seed) & _MASK64] + [_tag_to_int(t) for t in tags]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *tags) -> int:
    """Collapse ``(seed, *tags)`` into a single 63-bit integer seed."""
    entropy = [int(seed) & _MASK64] + [_tag_to_int(t) for t in tags]
    state = np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0]
    return int(state) >> 1

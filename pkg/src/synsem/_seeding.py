"""Stable seed derivation so parallel work is schedule-independent."""

from __future__ import annotations

import hashlib


def stable_seed(*parts):
    """Collapse a key (strings, ints, ...) into a 64-bit seed.

    Uses a keyed hash rather than Python's salted ``hash`` so results are
    reproducible across processes and runs.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")

"""Stable derivation of per-stage sub-seeds from one root seed.

Sub-seeds are keyed by name rather than by draw order, so adding a new
stage to a pipeline never changes the randomness any existing stage sees.
"""

from __future__ import annotations

import hashlib


def subseed(root: int, *parts: object) -> int:
    """Derive a 64-bit seed from ``root`` and a key path.

    The derivation hashes the decimal root plus the string form of each
    part, so it is stable across processes and platforms (unlike ``hash``).
    """
    key = ":".join([str(int(root))] + [str(p) for p in parts])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")

"""Deterministic seed derivation so one global seed drives every stage."""

from __future__ import annotations

import hashlib


def derive_seed(base_seed: int, label: str) -> int:
    """Stable child seed for a named purpose (hash of base seed + label)."""
    digest = hashlib.sha256(f"{base_seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % (2**63 - 1)

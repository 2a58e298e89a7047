"""Stable seed derivation so parallel corpus synthesis stays reproducible."""

from __future__ import annotations

import hashlib


def derive_seed(base: int, *parts: object) -> int:
    """Hash (base, parts) into a 63-bit seed; stable across runs and platforms."""
    payload = repr((base, parts)).encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1

"""Canonical JSON serialization and content hashing.

All persisted objects are serialized as UTF-8 JSON with sorted keys and no
insignificant whitespace, so identical content always produces identical
bytes.  Step digests are the first 64 bits of BLAKE2b over those bytes; the
digest is an integrity/identity marker, not a security boundary, and any
implementation that hashes the same canonical bytes interoperates.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

SCHEMA_VERSION = 1


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def canonical_bytes(obj: Any) -> bytes:
    return canonical_json(obj).encode("utf-8")


def content_digest(obj: Any) -> str:
    """64-bit hex digest of an object's canonical form."""
    return hashlib.blake2b(canonical_bytes(obj), digest_size=8).hexdigest()


def session_digest(step_hashes: list[str]) -> str:
    """Digest over an ordered list of step hashes; identifies a whole trace."""
    return hashlib.blake2b(canonical_bytes(step_hashes), digest_size=8).hexdigest()

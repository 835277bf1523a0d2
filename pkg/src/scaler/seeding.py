"""Deterministic seed derivation.

A single master seed fans out into independent streams by hashing a
component path (for example ``(master, "inst", step, env_id, index)``).
Streams never collide across distinct paths, so adding an environment or
an instance does not perturb the seeds handed to any other consumer.
"""

from __future__ import annotations

import hashlib

_SEP = b"\x1f"
MASK64 = (1 << 64) - 1


def derive_seed(*parts: object) -> int:
    """Hash the component path into a stable unsigned 64-bit seed."""
    payload = _SEP.join(str(p).encode("utf-8") for p in parts)
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "big") & MASK64

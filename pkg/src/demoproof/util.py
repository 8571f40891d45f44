"""Small shared helpers: canonical JSON, hashing, seed derivation."""

from __future__ import annotations

import hashlib
import json
from typing import Any


def canonical_json(obj: Any) -> str:
    """Serialize deterministically: sorted keys, no whitespace padding."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def derive_seed(*parts: object) -> int:
    """Stable 63-bit seed from arbitrary labelled parts.

    Unlike hash(), this does not depend on PYTHONHASHSEED, so artifacts
    produced from the same --seed are reproducible across processes.
    """
    text = "\x1f".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big") >> 1


def float_str(x: float) -> str:
    """Shortest decimal string that round-trips the exact float (<= 17 digits)."""
    return repr(float(x))

"""Small shared helpers: decimal rounding, seed derivation, canonical hashing."""

from __future__ import annotations

import hashlib
import json
from decimal import ROUND_HALF_UP, Decimal


def as_decimal(value) -> Decimal:
    """Coerce str/int/float/Decimal to Decimal without binary-float artifacts."""
    if isinstance(value, Decimal):
        return value
    if isinstance(value, float):
        # str() gives the shortest repr, so 0.02 stays 0.02 instead of 0.0200000...4
        return Decimal(str(value))
    return Decimal(value)


def round_half_away(value, places: int = 2) -> Decimal:
    """Round to `places` decimals with ties going away from zero."""
    q = Decimal(1).scaleb(-places)
    return as_decimal(value).quantize(q, rounding=ROUND_HALF_UP)


def format_fixed(value, places: int = 2) -> str:
    """Fixed-point string with `places` decimals, half-away-from-zero ties."""
    return str(round_half_away(value, places))


def derive_seed(root_seed: int, label: str) -> int:
    """Derive a stream-specific 63-bit seed from the run's root seed."""
    digest = hashlib.sha256(f"{root_seed}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_hash(obj) -> str:
    """Stable short hash of a JSON-serializable object."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]

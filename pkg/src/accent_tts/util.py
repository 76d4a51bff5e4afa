"""Small shared helpers: seeding, hashing, canonical JSON, timestamps."""

from __future__ import annotations

import hashlib
import json
import os
import time
from datetime import datetime, timezone


def canonical_json(obj) -> str:
    """Serialize with sorted keys and no whitespace so hashes are stable."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def config_hash(obj) -> str:
    return sha256_hex(canonical_json(obj).encode("utf-8"))[:16]


def derive_seed(seed: int, purpose: str) -> int:
    """Stable sub-seed for a named purpose, independent of call order."""
    digest = hashlib.sha256(f"{seed}:{purpose}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little") % (2**31 - 1)


def utc_date() -> str:
    """ISO date; honors SOURCE_DATE_EPOCH so reports can be byte-reproducible."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    ts = float(epoch) if epoch is not None else time.time()
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%d")

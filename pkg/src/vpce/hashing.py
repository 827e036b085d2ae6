"""Stable configuration digests.

Every artifact file embeds the digest of the configuration that produced
it; downstream stages refuse inputs whose digests disagree. Digests are
computed over a canonical ``field=value`` rendering of dataclass fields,
so they are stable across processes and platforms.
"""

from __future__ import annotations

import dataclasses
import hashlib


def _canonical(value) -> str:
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        fields = dataclasses.fields(value)
        inner = ";".join(f"{f.name}={_canonical(getattr(value, f.name))}" for f in fields)
        return f"{type(value).__name__}({inner})"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_canonical(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def stable_hash(*values) -> str:
    """16-hex-digit digest of the canonical rendering of ``values``."""
    text = "|".join(_canonical(v) for v in values)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

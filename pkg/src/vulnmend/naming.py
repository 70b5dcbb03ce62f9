"""Collision-free naming shared by logs and edit history.

The first use of a name keeps it; later uses get a numeric suffix
counting from 2: "probe", "probe-2", "probe-3", ...
"""

from __future__ import annotations


def dedupe_name(counts: dict[str, int], name: str) -> str:
    seen = counts.get(name, 0)
    counts[name] = seen + 1
    if seen == 0:
        return name
    return f"{name}-{seen + 1}"

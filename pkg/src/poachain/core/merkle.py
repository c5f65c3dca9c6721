from __future__ import annotations

from collections.abc import Sequence

from .crypto import Digest, digest

EMPTY_ROOT = digest(b"")


def merkle_root(digests: Sequence[Digest]) -> Digest:
    """Binary Merkle root; an odd node is paired with itself.

    The empty list maps to ``digest(b"")``. A single leaf is still hashed
    once (``digest(d || d)``), so a root never equals a bare leaf.
    """
    if not digests:
        return EMPTY_ROOT
    level = list(digests)
    while True:
        if len(level) % 2:
            level.append(level[-1])
        level = [digest(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
        if len(level) == 1:
            return level[0]

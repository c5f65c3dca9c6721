"""Key files: JSON ``{"secret", "public_key", "address"}``, mode 0600."""

from __future__ import annotations

import json
import os
from pathlib import Path

from .core.crypto import KeyPair, from_hex, to_hex


class KeyFileError(ValueError):
    pass


def save_key(key: KeyPair, path: str | Path) -> None:
    path = Path(path)
    body = json.dumps({"secret": to_hex(key.secret), "public_key": to_hex(key.public),
                       "address": to_hex(key.address)}, indent=1)
    # create with restrictive permissions rather than chmod after the fact
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "w") as fh:
        fh.write(body + "\n")
    os.chmod(path, 0o600)


def load_key(path: str | Path) -> KeyPair:
    try:
        data = json.loads(Path(path).read_text())
        key = KeyPair.from_secret(from_hex(data["secret"], 32))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise KeyFileError(f"{path}: {exc}") from None
    if "public_key" in data and from_hex(data["public_key"], 32) != key.public:
        raise KeyFileError(f"{path}: public key does not match secret")
    return key

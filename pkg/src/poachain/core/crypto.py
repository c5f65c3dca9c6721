"""Hashing, keys, addresses and signatures.

All digests are SHA-256. Signatures are Ed25519 (RFC 8032), which is
deterministic: signing the same message twice yields the same bytes.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from functools import lru_cache

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

DIGEST_SIZE = 32
ADDRESS_SIZE = 20
ZERO_DIGEST = bytes(DIGEST_SIZE)
ZERO_ADDRESS = bytes(ADDRESS_SIZE)

SCHEME_NONE = 0
SCHEME_ED25519 = 1

Digest = bytes
Address = bytes


def digest(data: bytes) -> Digest:
    return hashlib.sha256(data).digest()


def to_hex(value: bytes) -> str:
    """Lowercase hex, no ``0x`` prefix."""
    return value.hex()


def from_hex(text: str, size: int | None = None) -> bytes:
    if text.startswith(("0x", "0X")):
        text = text[2:]
    raw = bytes.fromhex(text)
    if size is not None and len(raw) != size:
        raise ValueError(f"expected {size} bytes, got {len(raw)}")
    return raw


def address_of(public_key: bytes) -> Address:
    """Trailing 20 bytes of the digest of the public key."""
    return digest(public_key)[-ADDRESS_SIZE:]


@dataclass(frozen=True)
class Signature:
    scheme: int
    public_key: bytes
    value: bytes

    @property
    def signer(self) -> Address:
        return address_of(self.public_key)


EMPTY_SIGNATURE = Signature(SCHEME_NONE, b"", b"")


@dataclass(frozen=True)
class KeyPair:
    secret: bytes
    public: bytes

    @classmethod
    def from_secret(cls, secret: bytes) -> KeyPair:
        sk = Ed25519PrivateKey.from_private_bytes(secret)
        public = sk.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
        return cls(secret=secret, public=public)

    @classmethod
    def generate(cls) -> KeyPair:
        return cls.from_secret(os.urandom(32))

    @classmethod
    def from_seed(cls, *parts: bytes | str | int) -> KeyPair:
        """Deterministic key for simulations and fixtures."""
        h = hashlib.sha256(b"poachain-key")
        for part in parts:
            if isinstance(part, int):
                part = part.to_bytes(8, "big", signed=True)
            elif isinstance(part, str):
                part = part.encode()
            h.update(len(part).to_bytes(4, "big"))
            h.update(part)
        return cls.from_secret(h.digest())

    @property
    def address(self) -> Address:
        return address_of(self.public)

    def sign(self, message: bytes) -> Signature:
        value = _private_key(self.secret).sign(message)
        return Signature(SCHEME_ED25519, self.public, value)


@lru_cache(maxsize=4096)
def _private_key(secret: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(secret)


@lru_cache(maxsize=1 << 16)
def _verify_cached(public_key: bytes, message: bytes, value: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(value, message)
    except (InvalidSignature, ValueError):
        return False
    return True


def verify(signature: Signature, message: bytes, signer: Address | None = None) -> bool:
    """Check ``signature`` over ``message``; optionally require the signer address.

    Verification is a pure function of its inputs, so results are memoized.
    """
    if signature.scheme != SCHEME_ED25519:
        return False
    if len(signature.public_key) != 32 or len(signature.value) != 64:
        return False
    if signer is not None and address_of(signature.public_key) != signer:
        return False
    return _verify_cached(signature.public_key, message, signature.value)
